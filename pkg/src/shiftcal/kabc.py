"""Kernel ABC: from prior draws and simulations to a posterior embedding.

The posterior over simulator parameters is represented by its kernel
mean: a weighted expansion sum_j w_j k_Theta(., theta_j) over m prior
draws, where the weights come from the regularized Gram solve against
the observed data under the importance-weighted output kernel.  Weights
may be negative and need not sum to one; consumers use them as-is.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._seeding import derive_rng, derive_seed
from .kern import ParamKernel, WeightedOutputKernel, gram_and_rhs, regularized_solve
from .sim import Dataset, Simulator
from .weights import ImportanceWeights


@dataclass(frozen=True)
class PriorSpec:
    """Prior over simulator parameters: diagonal Gaussian or uniform box."""

    family: str
    mean: tuple = ()
    std: tuple = ()
    low: tuple = ()
    high: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "mean", tuple(float(v) for v in self.mean))
        object.__setattr__(self, "std", tuple(float(v) for v in self.std))
        object.__setattr__(self, "low", tuple(float(v) for v in self.low))
        object.__setattr__(self, "high", tuple(float(v) for v in self.high))
        if self.family == "normal":
            if len(self.mean) != len(self.std) or not self.mean:
                raise ValueError("normal prior needs aligned mean and std tuples")
            if any(s < 0 for s in self.std):
                raise ValueError(f"prior stds must be >= 0, got {self.std}")
        elif self.family == "uniform":
            if len(self.low) != len(self.high) or not self.low:
                raise ValueError("uniform prior needs aligned low and high tuples")
            if any(lo >= hi for lo, hi in zip(self.low, self.high)):
                raise ValueError(f"prior box must have low < high, got {self.low} / {self.high}")
        else:
            raise ValueError(f"unknown prior family {self.family!r}")

    @classmethod
    def normal(cls, mean, std) -> "PriorSpec":
        return cls(family="normal", mean=tuple(mean), std=tuple(std))

    @classmethod
    def uniform(cls, low, high) -> "PriorSpec":
        return cls(family="uniform", low=tuple(low), high=tuple(high))

    @property
    def dim(self) -> int:
        return len(self.mean) if self.family == "normal" else len(self.low)

    def sample(self, m: int, rng: np.random.Generator) -> np.ndarray:
        if self.family == "normal":
            draws = rng.standard_normal((m, self.dim))
            return np.asarray(self.mean) + np.asarray(self.std) * draws
        return rng.uniform(self.low, self.high, size=(m, self.dim))

    def log_pdf(self, theta) -> float:
        """Log density, -inf outside a uniform box (degenerate stds unsupported)."""
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.dim,):
            raise ValueError(f"parameter dimension mismatch: {theta.shape} vs ({self.dim},)")
        if self.family == "normal":
            std = np.asarray(self.std)
            if np.any(std == 0):
                raise ValueError("log_pdf undefined for a degenerate normal prior")
            z = (theta - np.asarray(self.mean)) / std
            return float(-0.5 * z.dot(z) - np.sum(np.log(std)) - 0.5 * self.dim * np.log(2 * np.pi))
        if self.in_support(theta):
            return float(-np.sum(np.log(np.asarray(self.high) - np.asarray(self.low))))
        return -np.inf

    def in_support(self, theta) -> bool:
        theta = np.asarray(theta, dtype=float)
        if self.family == "normal":
            return bool(np.all(np.isfinite(theta)))
        return bool(np.all(theta >= self.low) and np.all(theta <= self.high))

    def center(self) -> np.ndarray:
        """Prior mean (normal) or box midpoint (uniform)."""
        if self.family == "normal":
            return np.asarray(self.mean, dtype=float)
        return 0.5 * (np.asarray(self.low) + np.asarray(self.high))

    def search_box(self, n_std: float = 4.0) -> tuple[np.ndarray, np.ndarray]:
        """Bounds covering (effectively) all prior mass, for grid searches."""
        if self.family == "uniform":
            return np.asarray(self.low, dtype=float), np.asarray(self.high, dtype=float)
        mean = np.asarray(self.mean, dtype=float)
        std = np.asarray(self.std, dtype=float)
        return mean - n_std * std, mean + n_std * std

    def to_dict(self) -> dict:
        if self.family == "normal":
            return {"family": "normal", "mean": list(self.mean), "std": list(self.std)}
        return {"family": "uniform", "low": list(self.low), "high": list(self.high)}

    @classmethod
    def from_dict(cls, spec: dict) -> "PriorSpec":
        family = spec.get("family")
        if family == "normal":
            if ("std" in spec) == ("var" in spec):
                raise ValueError("normal prior spec needs exactly one of 'std' or 'var'")
            if "std" in spec:
                std = [float(s) for s in spec["std"]]
            else:
                std = [float(np.sqrt(v)) for v in spec["var"]]
            return cls.normal([float(v) for v in spec["mean"]], std)
        if family == "uniform":
            return cls.uniform(spec["low"], spec["high"])
        raise ValueError(f"unknown prior family {family!r}")


@dataclass(frozen=True)
class PseudoOutputs:
    """Simulated output vectors at the training inputs, one row per draw."""

    thetas: np.ndarray  # (m, d) parameter draws
    values: np.ndarray  # (m, n) simulator outputs

    def __post_init__(self):
        thetas = np.asarray(self.thetas, dtype=float)
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "thetas", thetas)
        object.__setattr__(self, "values", values)
        if thetas.ndim != 2 or values.ndim != 2 or thetas.shape[0] != values.shape[0]:
            raise ValueError(f"misaligned pseudo-outputs: {thetas.shape} vs {values.shape}")
        if not (np.all(np.isfinite(thetas)) and np.all(np.isfinite(values))):
            raise ValueError("pseudo-outputs contain non-finite entries")

    @property
    def m(self) -> int:
        return self.thetas.shape[0]


@dataclass(frozen=True)
class PosteriorEmbedding:
    """Kernel mean of the calibrated parameter posterior.

    Evaluating at theta gives sum_j weights[j] * k(theta, draws[j]).
    """

    draws: np.ndarray
    weights: np.ndarray
    kernel: ParamKernel
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        draws = np.asarray(self.draws, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "draws", draws)
        object.__setattr__(self, "weights", weights)
        if draws.ndim != 2 or weights.shape != (draws.shape[0],):
            raise ValueError(f"misaligned embedding: {draws.shape} vs {weights.shape}")
        if not (np.all(np.isfinite(draws)) and np.all(np.isfinite(weights))):
            raise ValueError("embedding contains non-finite entries")

    @property
    def m(self) -> int:
        return self.draws.shape[0]

    @property
    def dim(self) -> int:
        return self.draws.shape[1]

    def evaluate(self, theta) -> float:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.dim,):
            raise ValueError(f"parameter dimension mismatch: {theta.shape} vs ({self.dim},)")
        return float(self.kernel.cross(theta[None, :], self.draws)[0] @ self.weights)

    def evaluate_many(self, thetas) -> np.ndarray:
        return self.kernel.cross(thetas, self.draws) @ self.weights

    def to_json(self, path=None) -> str:
        payload = {
            "draws": [[float(v) for v in row] for row in self.draws],
            "weights": [float(v) for v in self.weights],
            "sigma2_theta": self.kernel.sigma2,
            "meta": self.meta,
        }
        text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_json(cls, source) -> "PosteriorEmbedding":
        if isinstance(source, (str, Path)) and "\n" not in str(source):
            source = Path(source).read_text()
        payload = json.loads(source)
        return cls(
            draws=np.asarray(payload["draws"], dtype=float),
            weights=np.asarray(payload["weights"], dtype=float),
            kernel=ParamKernel(float(payload["sigma2_theta"])),
            meta=payload.get("meta", {}),
        )


def sample_prior(prior: PriorSpec, m: int, seed: int) -> np.ndarray:
    """m i.i.d. parameter draws, reproducible under the seed."""
    if m < 1:
        raise ValueError(f"need m >= 1 prior draws, got {m}")
    return prior.sample(m, derive_rng(seed, "prior-draws"))


def simulate_pseudo_outputs(sim: Simulator, thetas, xs, seed: int) -> PseudoOutputs:
    """Run the simulator at every (training input, prior draw) pair.

    Each (i, j) evaluation uses its own derived stream.  Deterministic
    simulators go through the vectorized path; stochastic ones are
    evaluated point-wise so streams stay independent.
    """
    thetas = np.asarray(thetas, dtype=float)
    if thetas.ndim == 1:
        thetas = thetas[:, None]
    xs = np.asarray(xs, dtype=float)
    values = np.empty((thetas.shape[0], xs.size))
    for j, theta in enumerate(thetas):
        if sim.deterministic:
            values[j] = sim.evaluate_many(xs, theta)
            continue
        for i, x in enumerate(xs):
            try:
                values[j, i] = sim.evaluate(float(x), theta, derive_seed(seed, "pseudo", j, i))
            except Exception as exc:
                raise RuntimeError(
                    f"simulator failed at input {i} (x={x}) for draw {j} (theta={theta})"
                ) from exc
    return PseudoOutputs(thetas=thetas, values=values)


def build_embedding(
    pseudo: PseudoOutputs,
    dataset: Dataset,
    beta: ImportanceWeights,
    sigma2: float,
    sigma2_theta: float,
    epsilon: float,
    meta: dict | None = None,
) -> PosteriorEmbedding:
    """Solve for the embedding weights given simulations and observations."""
    kernel = WeightedOutputKernel(sigma2=sigma2, beta=np.asarray(beta, dtype=float))
    system = gram_and_rhs(pseudo.values, dataset.y, kernel, epsilon)
    w = regularized_solve(system)
    info = {"sigma2": sigma2, "epsilon": epsilon, "n": dataset.n, "m": pseudo.m}
    if meta:
        info.update(meta)
    return PosteriorEmbedding(
        draws=pseudo.thetas,
        weights=w,
        kernel=ParamKernel(sigma2_theta),
        meta=info,
    )


def embedding_eval(emb: PosteriorEmbedding, theta) -> float:
    """Value of the posterior kernel mean at one parameter point."""
    return emb.evaluate(theta)


def embedding_distance(a: PosteriorEmbedding, b: PosteriorEmbedding) -> float:
    """Kernel-space norm of the difference of two embeddings.

    Both must use the same parameter-kernel bandwidth.  Computed as the
    closed-form quadratic expansion, clamped at zero against round-off.
    """
    if a.kernel.sigma2 != b.kernel.sigma2:
        raise ValueError("embeddings use different parameter-kernel bandwidths")
    kern = a.kernel
    if a.draws.shape == b.draws.shape and np.array_equal(a.draws, b.draws):
        # shared atoms: the weight-difference form avoids cancellation
        delta = a.weights - b.weights
        sq = float(delta @ kern.gram(a.draws) @ delta)
    else:
        sq = (
            float(a.weights @ kern.gram(a.draws) @ a.weights)
            - 2.0 * float(a.weights @ kern.cross(a.draws, b.draws) @ b.weights)
            + float(b.weights @ kern.gram(b.draws) @ b.weights)
        )
    return float(np.sqrt(max(sq, 0.0)))


def regularization_schedule(m: int, b: float, C: float) -> float:
    """Decay schedule C * m**(-b / (1 + 4b)) for the Gram regularizer.

    ``b`` models how fast the output-kernel spectrum decays; larger b
    pushes the exponent toward -1/4.
    """
    if m < 1:
        raise ValueError(f"need m >= 1, got {m}")
    if not b > 1:
        raise ValueError(f"decay exponent must exceed 1, got {b}")
    if not C > 0:
        raise ValueError(f"schedule constant must be positive, got {C}")
    return float(C * m ** (-b / (1.0 + 4.0 * b)))
