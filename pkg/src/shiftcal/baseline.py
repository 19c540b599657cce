"""Random-walk Metropolis-Hastings baseline.

The comparison sampler targets the importance-weighted Gaussian
likelihood times the prior.  Unlike the kernel pipeline it is handed the
observation-noise variance, a deliberate advantage; every MH step costs
one full simulator sweep over the training inputs, which is the unit
used for simulation-budget comparisons.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from ._seeding import derive_rng, derive_seed
from .sim import Dataset, Simulator
from .weights import ImportanceWeights


@dataclass(frozen=True)
class MHConfig:
    """Random-walk sampler settings."""

    proposal_std: float
    steps: int
    burn_in: float = 0.10
    noise_var: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not self.proposal_std > 0:
            raise ValueError(f"proposal std must be positive, got {self.proposal_std}")
        if not 0 <= self.burn_in < 1:
            raise ValueError(f"burn-in fraction must lie in [0, 1), got {self.burn_in}")
        if not self.noise_var > 0:
            raise ValueError(f"noise variance must be positive, got {self.noise_var}")
        if self.steps < 1:
            raise ValueError(f"need at least one step, got {self.steps}")


@dataclass(frozen=True)
class MHTrace:
    """Chain states after every step, plus acceptance bookkeeping."""

    init: np.ndarray
    states: np.ndarray      # (steps, d) current parameter after each step
    accepted: np.ndarray    # (steps,) bool
    burn_in_steps: int

    def __post_init__(self):
        if len(self.states) != len(self.accepted):
            raise ValueError("misaligned trace fields")
        if not 0 <= self.burn_in_steps <= len(self.states):
            raise ValueError(f"burn-in steps {self.burn_in_steps} out of range")

    @property
    def steps(self) -> int:
        return len(self.states)

    @property
    def acceptance_count(self) -> int:
        return int(np.sum(self.accepted))

    @property
    def acceptance_ratio(self) -> float:
        return self.acceptance_count / self.steps

    @property
    def post_burn_in(self) -> np.ndarray:
        return self.states[self.burn_in_steps :]

    def write_csv(self, path, header_comment: str | None = None) -> None:
        path = Path(path)
        dim = self.states.shape[1]
        with path.open("w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            writer = csv.writer(fh)
            writer.writerow(["step"] + [f"theta_{k}" for k in range(dim)] + ["accepted"])
            for s, (state, acc) in enumerate(zip(self.states, self.accepted), start=1):
                writer.writerow([s] + [repr(float(v)) for v in state] + [int(acc)])


def weighted_log_likelihood(
    theta,
    dataset: Dataset,
    beta: ImportanceWeights,
    sim: Simulator,
    noise_var: float,
    seed: int = 0,
) -> float:
    """Log of the importance-weighted Gaussian likelihood, up to a constant.

    -sum_i beta_i (y_i - r(x_i, theta))^2 / (2 noise_var), with one
    simulator sweep over the training inputs.
    """
    if not noise_var > 0:
        raise ValueError(f"noise variance must be positive, got {noise_var}")
    theta = np.asarray(theta, dtype=float)
    outputs = sim.evaluate_many(dataset.x, theta, seed=derive_seed(seed, "loglik"))
    residuals = dataset.y - outputs
    b = np.asarray(beta, dtype=float)
    return float(-np.sum(b * residuals * residuals) / (2.0 * noise_var))


def mh_sample(target: Callable[[np.ndarray], float], init, cfg: MHConfig) -> MHTrace:
    """Random-walk MH with an isotropic Gaussian proposal.

    ``target`` returns the unnormalized log density (log-likelihood plus
    log-prior); -inf rejects a proposal outright, which is how bounded
    priors exclude out-of-support moves.  The current log density is
    cached, so each step makes exactly one target evaluation.
    """
    current = np.atleast_1d(np.asarray(init, dtype=float))
    current_logp = target(current)
    if not np.isfinite(current_logp):
        raise ValueError(f"target is not finite at the initial point {current}")

    rng = derive_rng(cfg.seed, "mh-chain")
    dim = current.size
    states = np.empty((cfg.steps, dim))
    accepted = np.zeros(cfg.steps, dtype=bool)
    for s in range(cfg.steps):
        proposal = current + cfg.proposal_std * rng.standard_normal(dim)
        proposal_logp = target(proposal)
        if np.log(rng.uniform()) < proposal_logp - current_logp:
            current = proposal
            current_logp = proposal_logp
            accepted[s] = True
        states[s] = current
    return MHTrace(
        init=np.atleast_1d(np.asarray(init, dtype=float)),
        states=states,
        accepted=accepted,
        burn_in_steps=int(np.floor(cfg.steps * cfg.burn_in)),
    )


def simulation_budget(trace: MHTrace) -> int:
    """Simulator sweeps consumed by the chain: every step, burn-in included."""
    return trace.steps
