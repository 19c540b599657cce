"""Kernel herding: deterministic samples from a posterior embedding.

Herding greedily picks points whose empirical kernel mean tracks the
embedding.  The first point maximizes the embedding itself; point t
maximizes the embedding minus (1/t) times the summed kernel similarity
to the t-1 points already chosen.  The argmax runs over a finite
candidate pool (typically the embedding's own prior draws plus fresh
draws), since the simulator setting offers no gradients.  Points may
repeat; repeat frequencies carry probability mass.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .kabc import PosteriorEmbedding


@dataclass(frozen=True)
class CandidatePool:
    """Finite set of parameter vectors over which each argmax is taken."""

    points: np.ndarray

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        object.__setattr__(self, "points", points)
        if points.shape[0] < 1:
            raise ValueError("candidate pool must be non-empty")
        if not np.all(np.isfinite(points)):
            raise ValueError("candidate pool contains non-finite entries")

    @classmethod
    def from_draws(cls, draws, extra=None) -> "CandidatePool":
        draws = np.atleast_2d(np.asarray(draws, dtype=float))
        if extra is not None and len(extra):
            draws = np.vstack([draws, np.atleast_2d(np.asarray(extra, dtype=float))])
        return cls(draws)

    @property
    def size(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class HerdedSamples:
    """Ordered herded parameters with their pool indices and step scores."""

    points: np.ndarray      # (T, d)
    indices: np.ndarray     # (T,) positions in the pool
    objectives: np.ndarray  # (T,) attained argmax values
    pool: CandidatePool

    def __post_init__(self):
        if not (len(self.points) == len(self.indices) == len(self.objectives)):
            raise ValueError("misaligned herded-sample fields")

    def __len__(self) -> int:
        return len(self.points)

    def write_csv(self, path, header_comment: str | None = None) -> None:
        """One parameter vector per row, in herding order."""
        path = Path(path)
        dim = self.points.shape[1]
        with path.open("w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            writer = csv.writer(fh)
            writer.writerow([f"theta_{k}" for k in range(dim)])
            for row in self.points:
                writer.writerow([repr(float(v)) for v in row])


def herd(emb: PosteriorEmbedding, pool: CandidatePool, T: int) -> HerdedSamples:
    """Draw T deterministic samples from the embedding over the pool.

    Ties in the argmax break toward the lowest pool index.
    """
    if T < 1:
        raise ValueError(f"need T >= 1 herded samples, got {T}")
    if pool.points.shape[1] != emb.dim:
        raise ValueError(
            f"pool dimension {pool.points.shape[1]} does not match embedding dimension {emb.dim}"
        )
    mean_vals = emb.evaluate_many(pool.points)          # embedding at every candidate
    pool_gram = emb.kernel.cross(pool.points, pool.points)

    indices = np.empty(T, dtype=int)
    objectives = np.empty(T)
    repulsion = np.zeros(pool.size)                     # sum of k(candidate, chosen)
    for t in range(1, T + 1):
        scores = mean_vals - repulsion / t
        pick = int(np.argmax(scores))                   # first max = lowest index
        indices[t - 1] = pick
        objectives[t - 1] = float(scores[pick])
        repulsion += pool_gram[:, pick]
    return HerdedSamples(
        points=pool.points[indices],
        indices=indices,
        objectives=objectives,
        pool=pool,
    )


def herding_mmd(emb: PosteriorEmbedding, samples: HerdedSamples, t: int) -> float:
    """Kernel-space distance between the embedding and the first t samples.

    Closed-form quadratic expansion of
    || sum_j w_j k(., draw_j) - (1/t) sum_s k(., sample_s) ||,
    clamped at zero against round-off.
    """
    if not 1 <= t <= len(samples):
        raise ValueError(f"t must lie in [1, {len(samples)}], got {t}")
    chosen = samples.points[:t]
    w = emb.weights
    emb_term = float(w @ emb.kernel.gram(emb.draws) @ w)
    cross_term = float(w @ emb.kernel.cross(emb.draws, chosen) @ np.ones(t))
    sample_term = float(np.sum(emb.kernel.gram(chosen)))
    sq = emb_term - (2.0 / t) * cross_term + sample_term / (t * t)
    return float(np.sqrt(max(sq, 0.0)))
