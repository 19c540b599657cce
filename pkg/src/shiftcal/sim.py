"""Black-box simulators and data-generating processes.

A simulator maps an input ``x`` and a parameter vector ``theta`` to a
real output.  Evaluations are pure: a stochastic simulator derives its
random stream from ``(seed, x)``, so repeated calls with identical
arguments return identical outputs regardless of call order, and a
fixed seed yields a deterministic function of ``theta`` (common random
numbers).

Two benchmarks ship here: a trivially-misspecified linear model paired
with a cubic truth, and a two-stage assembly line (sequential assembly
feeding batched inspection) whose makespan is the simulator output.
"""

from __future__ import annotations

import csv
import json
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from ._seeding import derive_rng, derive_seed
from .weights import DensitySpec

# Truth functions take (x, seed); deterministic ones ignore the seed.
TruthFn = Callable[[float, int], float]


class Simulator(ABC):
    """Evaluation-only interface: no gradients, no internal structure."""

    name: str = "simulator"
    dim_theta: int = 0
    deterministic: bool = False

    @abstractmethod
    def evaluate(self, x: float, theta, seed: int = 0) -> float:
        """Run one simulation at input ``x`` with parameters ``theta``."""

    def evaluate_many(self, xs, theta, seed: int = 0) -> np.ndarray:
        """Evaluate at several inputs with a shared base seed.

        Each input gets its own derived stream, so the result does not
        depend on evaluation order.  Subclasses may vectorize.
        """
        xs = np.asarray(xs, dtype=float)
        return np.array([self.evaluate(float(x), theta, seed) for x in xs])

    def evaluate_params(self, x: float, thetas, seed: int = 0) -> np.ndarray:
        """Evaluate one input under several parameter vectors."""
        thetas = np.asarray(thetas, dtype=float)
        return np.array([self.evaluate(x, theta, seed) for theta in thetas])

    def _check_theta(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.dim_theta,):
            raise ValueError(
                f"{self.name} expects {self.dim_theta} parameters, got shape {theta.shape}"
            )
        return theta


class LinearSimulator(Simulator):
    """r(x, theta) = theta[0] + theta[1] * x, treated as a black box."""

    name = "linear"
    dim_theta = 2
    deterministic = True

    def evaluate(self, x: float, theta, seed: int = 0) -> float:
        theta = self._check_theta(theta)
        return float(theta[0] + theta[1] * x)

    def evaluate_many(self, xs, theta, seed: int = 0) -> np.ndarray:
        theta = self._check_theta(theta)
        return theta[0] + theta[1] * np.asarray(xs, dtype=float)

    def evaluate_params(self, x: float, thetas, seed: int = 0) -> np.ndarray:
        thetas = np.asarray(thetas, dtype=float)
        if thetas.ndim != 2 or thetas.shape[1] != self.dim_theta:
            raise ValueError(f"expected (m, {self.dim_theta}) parameters, got {thetas.shape}")
        return thetas[:, 0] + thetas[:, 1] * x


def linear_sim(x: float, theta) -> float:
    """Intercept-plus-slope evaluation of the linear benchmark model."""
    return LinearSimulator().evaluate(x, theta)


def cubic_truth(x: float, seed: int = 0) -> float:
    """Ground-truth regression function -x + x**3 for the linear benchmark."""
    return float(-x + x**3)


@dataclass(frozen=True)
class AssemblyLineParams:
    """Service-time parameters for the two-stage line.

    ``mean_assembly``/``spread_assembly`` give the per-product assembly
    duration distribution; ``mean_inspection``/``spread_inspection`` the
    per-batch inspection duration.  Spreads are standard deviations.
    """

    mean_assembly: float
    spread_assembly: float
    mean_inspection: float
    spread_inspection: float

    def __post_init__(self):
        for name, value in self.as_dict().items():
            if not value > 0:
                raise ValueError(f"assembly-line parameter {name} must be positive, got {value}")

    def as_dict(self) -> dict:
        return {
            "mean_assembly": self.mean_assembly,
            "spread_assembly": self.spread_assembly,
            "mean_inspection": self.mean_inspection,
            "spread_inspection": self.spread_inspection,
        }


class AssemblyLineSimulator(Simulator):
    """Makespan of producing and inspecting ``x`` products.

    Stage 1 assembles products one at a time; durations are
    Normal(theta[0], theta[1]^2) clamped at zero.  Stage 2 inspects in
    batches of ``batch_size`` (a trailing partial batch is inspected
    as-is) with durations Normal(theta[2], theta[3]^2) clamped at zero.
    A batch starts inspection at the later of its last product's
    assembly completion and the previous batch's inspection completion.

    theta components may be zero here (degenerate, useful for exact
    checks); the strict-positivity box lives in the prior, not the
    event loop.
    """

    name = "assembly"
    dim_theta = 4
    deterministic = False

    def __init__(self, batch_size: int = 4):
        if batch_size < 1:
            raise ValueError(f"batch size must be >= 1, got {batch_size}")
        self.batch_size = batch_size

    def evaluate(self, x: float, theta, seed: int = 0) -> float:
        theta = self._check_theta(theta)
        if not np.isfinite(x) or x < 1:
            raise ValueError(f"product count must be >= 1, got x={x}")
        if np.any(theta < 0):
            raise ValueError(f"assembly-line parameters must be non-negative, got {theta}")
        count = int(round(float(x)))
        # The stream depends on (seed, x) but not theta: one seed indexes
        # one realization of the underlying randomness, and parameters
        # transform it (common random numbers across parameter values).
        rng = derive_rng(seed, "assembly", float(x))

        mean_asm, sd_asm, mean_insp, sd_insp = theta
        durations = np.maximum(mean_asm + sd_asm * rng.standard_normal(count), 0.0)
        completion = np.cumsum(durations)

        # Batch b is ready when its last product leaves assembly.
        ready = completion[self.batch_size - 1 :: self.batch_size]
        if count % self.batch_size:
            ready = np.append(ready, completion[-1])
        n_batches = ready.size
        inspect = np.maximum(mean_insp + sd_insp * rng.standard_normal(n_batches), 0.0)

        # finish_b = max(ready_b, finish_{b-1}) + inspect_b, unrolled into
        # a running max so the whole schedule vectorizes.
        cum_inspect = np.cumsum(inspect)
        slack = ready - (cum_inspect - inspect)
        return float(cum_inspect[-1] + np.maximum.accumulate(slack)[-1])


def assembly_sim(x: float, theta, seed: int = 0, batch_size: int = 4) -> float:
    """One run of the assembly-line simulator."""
    return AssemblyLineSimulator(batch_size=batch_size).evaluate(x, theta, seed)


@dataclass(frozen=True)
class PiecewiseTruth:
    """Regression function that switches parameter regimes at a breakpoint.

    Returns ``base_sim(x, theta_lo)`` for x below the breakpoint and
    ``base_sim(x, theta_hi)`` at or above it.
    """

    base_sim: Simulator
    theta_lo: tuple
    theta_hi: tuple
    breakpoint: float

    def __call__(self, x: float, seed: int = 0) -> float:
        theta = self.theta_hi if x >= self.breakpoint else self.theta_lo
        return self.base_sim.evaluate(x, theta, seed)


def piecewise_truth(
    x: float,
    theta_lo,
    theta_hi,
    breakpoint: float,
    base_sim: Simulator,
    seed: int = 0,
) -> float:
    if not np.isfinite(breakpoint):
        raise ValueError(f"breakpoint must be finite, got {breakpoint}")
    return PiecewiseTruth(base_sim, tuple(theta_lo), tuple(theta_hi), breakpoint)(x, seed)


# Default regime parameters and breakpoint for the shipped assembly-line
# benchmark: training-region regime below, shifted regime at and above.
ASSEMBLY_THETA_LO = (2.0, 0.5, 5.0, 1.0)
ASSEMBLY_THETA_HI = (3.5, 0.5, 7.0, 1.0)
ASSEMBLY_BREAKPOINT = 110.0


@dataclass(frozen=True)
class DataGeneratingProcess:
    """Observed process: y(x) = truth(x) + zero-mean Gaussian noise."""

    truth: TruthFn
    noise_std: float
    q0: DensitySpec
    spec: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.noise_std < 0:
            raise ValueError(f"noise std must be >= 0, got {self.noise_std}")


@dataclass(frozen=True)
class Dataset:
    """Training pairs (x_i, y_i) with the seed that generated them."""

    x: np.ndarray
    y: np.ndarray
    seed: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        if x.shape != y.shape or x.ndim != 1:
            raise ValueError(f"inputs and outputs must be aligned 1-d vectors, got {x.shape} / {y.shape}")

    @property
    def n(self) -> int:
        return self.x.size

    def write_csv(self, path, sidecar: dict | None = None, header_comment: str | None = None) -> None:
        """Write ``x,y`` rows; seed and generator spec go to a JSON sidecar."""
        path = Path(path)
        with path.open("w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            writer = csv.writer(fh)
            writer.writerow(["x", "y"])
            for xi, yi in zip(self.x, self.y):
                writer.writerow([repr(float(xi)), repr(float(yi))])
        side = {"seed": self.seed, "meta": self.meta}
        if sidecar:
            side.update(sidecar)
        path.with_suffix(".json").write_text(json.dumps(side, indent=2, sort_keys=True) + "\n")

    @classmethod
    def read_csv(cls, path) -> "Dataset":
        path = Path(path)
        xs, ys = [], []
        with path.open(newline="") as fh:
            reader = csv.reader(row for row in fh if not row.startswith("#"))
            header = next(reader)
            if [h.strip() for h in header[:2]] != ["x", "y"]:
                raise ValueError(f"expected 'x,y' header in {path}, got {header}")
            for row in reader:
                xs.append(float(row[0]))
                ys.append(float(row[1]))
        sidecar = path.with_suffix(".json")
        seed, meta = 0, {}
        if sidecar.exists():
            side = json.loads(sidecar.read_text())
            seed = side.get("seed", 0)
            meta = side.get("meta", {})
        return cls(np.array(xs), np.array(ys), seed=seed, meta=meta)


def generate_dataset(dgp: DataGeneratingProcess, n: int, seed: int) -> Dataset:
    """Draw n inputs from q0 and push them through the observed process."""
    if n < 1:
        raise ValueError(f"need n >= 1 training points, got {n}")
    xs = dgp.q0.sample(n, derive_rng(seed, "inputs"))
    truth_vals = np.array(
        [dgp.truth(float(x), derive_seed(seed, "truth", i)) for i, x in enumerate(xs)]
    )
    noise = dgp.noise_std * derive_rng(seed, "noise").standard_normal(n)
    return Dataset(xs, truth_vals + noise, seed=seed, meta=dict(dgp.spec))


_REGISTRY: dict[str, Callable[..., Simulator]] = {
    "linear": LinearSimulator,
    "assembly": AssemblyLineSimulator,
}


def get_simulator(name: str, **options) -> Simulator:
    """Look up a registered simulator by its CLI name."""
    try:
        factory = _REGISTRY[name]
    except KeyError:
        known = ", ".join(sorted(_REGISTRY))
        raise ValueError(f"unknown simulator {name!r}; registered: {known}") from None
    return factory(**options)


def register_simulator(name: str, factory: Callable[..., Simulator]) -> None:
    _REGISTRY[name] = factory
