"""Data-coverage curve and the integrated data-quality score of a local dataset.

A reference point counts as covered at radius ``delta`` when some local point
lies within Euclidean distance ``delta`` of it (closed ball). The quality score
is the area under the coverage curve over ``[0, sqrt(d)]`` divided by
``sqrt(d)``, so it always lands in [0, 1].
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Union

import numpy as np

from fedpot.dataset import LabeledDataset

Points = Union[LabeledDataset, np.ndarray]

POOLED = "pooled"
UNIFORM = "uniform"

# Above this many (reference * local * d) scalars the exact pairwise path is
# replaced by the blocked Gram-matrix path.
_EXACT_LIMIT = 2_000_000
_BLOCK_ELEMENTS = 4_000_000


@dataclass(frozen=True)
class CoverageCurve:
    deltas: np.ndarray
    coverage: np.ndarray


@dataclass(frozen=True)
class QualityEstimate:
    phi: float
    grid_points: int
    reference_mode: str = POOLED
    reference_size: int = 0


def _as_points(data: Points) -> np.ndarray:
    arr = data.features if isinstance(data, LabeledDataset) else np.asarray(data, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(0, 0) if arr.size == 0 else arr.reshape(1, -1)
    return arr


def _check(local: np.ndarray, reference: np.ndarray) -> None:
    if reference.shape[0] == 0:
        raise ValueError("reference set is empty")
    if local.shape[0] and local.shape[1] != reference.shape[1]:
        raise ValueError(
            f"dimension mismatch: local d={local.shape[1]}, reference d={reference.shape[1]}"
        )


def nearest_distances(local: Points, reference: Points, threads: int = 1) -> np.ndarray:
    """Distance from every reference point to its nearest local point.

    Returns ``inf`` everywhere when ``local`` is empty. Small problems use an
    exact pairwise difference; large ones find the nearest neighbour through
    the Gram expansion and then recompute that one distance exactly, so a
    reference point that also belongs to ``local`` always gets exactly 0.
    """
    loc = _as_points(local)
    ref = _as_points(reference)
    _check(loc, ref)
    n_ref = ref.shape[0]
    if loc.shape[0] == 0:
        return np.full(n_ref, np.inf)
    d = ref.shape[1]
    if n_ref * loc.shape[0] * d <= _EXACT_LIMIT:
        diff = ref[:, None, :] - loc[None, :, :]
        return np.sqrt(np.min(np.einsum("ijk,ijk->ij", diff, diff), axis=1))

    loc_sq = np.einsum("ij,ij->i", loc, loc)
    rows = max(1, _BLOCK_ELEMENTS // max(loc.shape[0], 1))
    starts = list(range(0, n_ref, rows))

    def block(start: int) -> np.ndarray:
        chunk = ref[start : start + rows]
        gram = loc_sq[None, :] - 2.0 * chunk @ loc.T
        nearest = np.argmin(gram, axis=1)
        diff = chunk - loc[nearest]
        return np.sqrt(np.einsum("ij,ij->i", diff, diff))

    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(block, starts))
    else:
        parts = [block(s) for s in starts]
    return np.concatenate(parts)


def _coverage_from_distances(sorted_dist: np.ndarray, deltas: np.ndarray) -> np.ndarray:
    covered = np.searchsorted(sorted_dist, deltas, side="right")
    return covered / sorted_dist.shape[0]


def ball_coverage(local: Points, reference: Points, delta: float) -> float:
    """Fraction of reference points within ``delta`` of some local point."""
    if delta < 0:
        raise ValueError("delta must be non-negative")
    dist = nearest_distances(local, reference)
    return float(np.count_nonzero(dist <= delta) / dist.shape[0])


def delta_grid(dim: int, grid_points: int) -> np.ndarray:
    if grid_points < 2:
        raise ValueError("grid_points must be >= 2")
    top = math.sqrt(dim)
    deltas = np.linspace(0.0, top, grid_points)
    deltas[-1] = top
    return deltas


def coverage_curve(local: Points, reference: Points, grid_points: int = 64) -> CoverageCurve:
    ref = _as_points(reference)
    deltas = delta_grid(ref.shape[1], grid_points)
    dist = np.sort(nearest_distances(local, ref))
    return CoverageCurve(deltas, _coverage_from_distances(dist, deltas))


def integrate_curve(curve: CoverageCurve) -> float:
    """Trapezoidal mean of ``curve`` over its equally spaced grid.

    Written as a weighted sum of the samples so a constant curve integrates to
    that constant exactly.
    """
    c = curve.coverage
    if c.shape[0] < 2:
        return float(c[-1])
    return float((np.sum(c[1:-1]) + 0.5 * (c[0] + c[-1])) / (c.shape[0] - 1))


def vdd_quality(
    local: Points,
    reference: Points,
    grid_points: int = 64,
    reference_mode: str = POOLED,
) -> QualityEstimate:
    curve = coverage_curve(local, reference, grid_points)
    phi = min(1.0, max(0.0, integrate_curve(curve)))
    return QualityEstimate(phi, grid_points, reference_mode, int(_as_points(reference).shape[0]))


def uniform_reference(dim: int, size: int, seed: int) -> np.ndarray:
    """``size`` uniform points in the unit cube, shared by every supplier via ``seed``."""
    if size < 1:
        raise ValueError("reference size must be >= 1")
    return np.random.default_rng(seed).uniform(0.0, 1.0, size=(size, dim))


def assign_type(phi: float, num_types: int) -> int:
    """Bracket ``phi`` into type m with phi in [(m-1)/M, m/M); phi == 1 maps to M."""
    if num_types < 1:
        raise ValueError("num_types must be >= 1")
    if not 0.0 <= phi <= 1.0 or math.isnan(phi):
        raise ValueError(f"phi must lie in [0, 1], got {phi}")
    return min(num_types, int(math.floor(phi * num_types)) + 1)
