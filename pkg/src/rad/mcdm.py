"""Deterministic decision mathematics: ISM levels, rank aggregation and AHP.

All functions are pure and operate on immutable inputs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Dict, List, Mapping, Sequence, Tuple

import numpy as np
import numpy.typing as npt

from .config import DEFAULT_RANDOM_INDEX, get_logger
from .errors import DimensionMismatch, MalformedRanking, NoConvergence, PartitionStall

_logger = get_logger("mcdm")

SAATY_MAX = 9.0
CR_THRESHOLD = 0.1
POWER_TOLERANCE = 1e-12
POWER_MAX_ITERATIONS = 10_000
RECIPROCAL_TOLERANCE = 1e-9

SAATY_VALUES: Tuple[float, ...] = tuple([1.0 / v for v in range(9, 1, -1)] + [float(v) for v in range(1, 10)])


def _as_cells(matrix: Any) -> npt.NDArray[Any]:
    cells = np.asarray(getattr(matrix, "cells", matrix))
    if cells.ndim != 2 or cells.shape[0] != cells.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {cells.shape}")
    return cells


def _frozen(array: npt.NDArray[Any]) -> npt.NDArray[Any]:
    array = np.array(array, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class ReachabilityMatrix:
    """Reflexive, transitively closed Boolean matrix (``r_ab = 1`` iff b reachable from a)."""

    cells: npt.NDArray[np.int8]

    def __post_init__(self) -> None:
        cells = _as_cells(self.cells).astype(bool)
        if not np.all(np.diag(cells)):
            raise ValueError("reachability matrix must be reflexive")
        if np.any((cells.astype(np.int64) @ cells.astype(np.int64) > 0) & ~cells):
            raise ValueError("reachability matrix must be transitively closed")
        object.__setattr__(self, "cells", _frozen(cells.astype(np.int8)))

    @property
    def size(self) -> int:
        return int(self.cells.shape[0])


@dataclass(frozen=True)
class LevelPartition:
    """Ordered disjoint levels of criterion ids; level 1 (index 0) holds outcomes."""

    levels: Tuple[Tuple[int, ...], ...]

    def __post_init__(self) -> None:
        seen: set[int] = set()
        for level in self.levels:
            if not level:
                raise ValueError("levels must be non-empty")
            if seen & set(level):
                raise ValueError("levels must be pairwise disjoint")
            seen |= set(level)

    @property
    def ids(self) -> List[int]:
        return sorted(i for level in self.levels for i in level)

    def level_of(self, criterion_id: int) -> int:
        """1-based level number of ``criterion_id``."""

        for number, level in enumerate(self.levels, start=1):
            if criterion_id in level:
                return number
        raise KeyError(criterion_id)

    def to_list(self) -> List[List[int]]:
        return [list(level) for level in self.levels]


@dataclass(frozen=True)
class PairwiseMatrix:
    """Positive reciprocal comparison matrix on the Saaty range ``[1/9, 9]``."""

    cells: npt.NDArray[np.float64]

    def __post_init__(self) -> None:
        cells = _as_cells(self.cells).astype(float)
        _check_reciprocal(cells)
        if np.any(cells < 1.0 / SAATY_MAX - 1e-12) or np.any(cells > SAATY_MAX + 1e-12):
            raise ValueError("pairwise cells must lie within [1/9, 9]")
        object.__setattr__(self, "cells", _frozen(cells))

    @property
    def size(self) -> int:
        return int(self.cells.shape[0])

    def to_list(self) -> List[List[float]]:
        return [[float(v) for v in row] for row in self.cells]


@dataclass(frozen=True)
class ConsistencyReport:
    size: int
    lambda_max: float
    ci: float
    ri: float
    cr: float
    consistent: bool

    def to_dict(self) -> Dict[str, Any]:
        return {
            "size": self.size,
            "lambda_max": self.lambda_max,
            "CI": self.ci,
            "RI": self.ri,
            "CR": self.cr,
            "consistent": self.consistent,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ConsistencyReport":
        return cls(
            size=int(data["size"]),
            lambda_max=float(data["lambda_max"]),
            ci=float(data["CI"]),
            ri=float(data["RI"]),
            cr=float(data["CR"]),
            consistent=bool(data["consistent"]),
        )


@dataclass(frozen=True)
class WeightVector:
    weights: Tuple[float, ...]

    def __post_init__(self) -> None:
        values = tuple(float(w) for w in self.weights)
        if not values:
            raise ValueError("weight vector is empty")
        if any(w < 0 or not math.isfinite(w) for w in values):
            raise ValueError("weights must be finite and non-negative")
        if abs(math.fsum(values) - 1.0) > 1e-9:
            raise ValueError(f"weights must sum to 1, got {math.fsum(values)!r}")
        object.__setattr__(self, "weights", values)

    def __len__(self) -> int:
        return len(self.weights)

    def as_array(self) -> npt.NDArray[np.float64]:
        return np.asarray(self.weights, dtype=float)


def _check_reciprocal(cells: npt.NDArray[np.float64]) -> None:
    if not np.all(np.isfinite(cells)) or np.any(cells <= 0):
        raise ValueError("pairwise matrix must be finite and positive")
    if not np.allclose(np.diag(cells), 1.0, atol=RECIPROCAL_TOLERANCE, rtol=0):
        raise ValueError("pairwise matrix diagonal must be 1")
    if not np.allclose(cells * cells.T, 1.0, atol=RECIPROCAL_TOLERANCE, rtol=0):
        raise ValueError("pairwise matrix must be reciprocal")


# ---- ISM --------------------------------------------------------------------------
def transitive_closure(relations: Any) -> ReachabilityMatrix:
    """Warshall-style Boolean closure of a hollow binary relation matrix, plus the diagonal."""

    cells = _as_cells(relations)
    if not np.isin(cells, (0, 1)).all():
        raise ValueError("relation matrix must be binary")
    if np.any(np.diag(cells)):
        raise ValueError("relation matrix must have a zero diagonal")
    k = cells.shape[0]
    reach = cells.astype(bool) | np.eye(k, dtype=bool)
    for pivot in range(k):
        reach |= np.outer(reach[:, pivot], reach[pivot, :])
    return ReachabilityMatrix(reach.astype(np.int8))


def ism_partition(reachability: ReachabilityMatrix) -> LevelPartition:
    """Peel levels: an element joins the current level when its reachable set lies within its antecedents."""

    cells = reachability.cells.astype(bool)
    remaining = list(range(reachability.size))
    levels: List[Tuple[int, ...]] = []
    while remaining:
        sub = cells[np.ix_(remaining, remaining)]
        # reach(a) = row a, ante(a) = column a; reach ∩ ante == reach  <=>  row <= column
        selected = [a for i, a in enumerate(remaining) if np.all(sub[i, :] <= sub[:, i])]
        if not selected:
            raise PartitionStall(f"no level could be extracted from {len(remaining)} remaining criteria")
        levels.append(tuple(selected))
        chosen = set(selected)
        remaining = [a for a in remaining if a not in chosen]
    return LevelPartition(tuple(levels))


# ---- Rankings ------------------------------------------------------------------------
def aggregate_rankings(rankings: Sequence[Sequence[int]], ids: Sequence[int] | None = None) -> List[float]:
    """Mean 1-based position of each id across experts, in ``ids`` order (default: ascending)."""

    if not rankings:
        raise MalformedRanking("at least one ranking is required")
    order = list(ids) if ids is not None else sorted(rankings[0])
    expected = sorted(order)
    if len(set(expected)) != len(expected):
        raise MalformedRanking(f"duplicate ids in {order}")
    totals = {item: 0 for item in order}
    for ranking in rankings:
        if sorted(ranking) != expected:
            raise MalformedRanking(f"ranking {list(ranking)} is not a permutation of {expected}")
        for position, item in enumerate(ranking, start=1):
            totals[item] += position
    return [totals[item] / len(rankings) for item in order]


def rank_gap_intensity(gap: float) -> float:
    """Saaty intensity for a non-negative average-rank gap: ``clamp(1 + round_half_up(gap), 1, 9)``."""

    return float(min(SAATY_MAX, max(1.0, 1.0 + math.floor(gap + 0.5))))


def ranks_to_comparison_matrix(avg_ranks: Sequence[float]) -> PairwiseMatrix:
    """Map average ranks to a reciprocal matrix; the better-ranked side gets ``1 + gap``."""

    ranks = [float(r) for r in avg_ranks]
    if not ranks or not all(math.isfinite(r) for r in ranks):
        raise ValueError("average ranks must be a non-empty list of finite numbers")
    m = len(ranks)
    cells = np.ones((m, m))
    for a in range(m):
        for b in range(a + 1, m):
            if ranks[a] <= ranks[b]:
                cells[a, b] = rank_gap_intensity(ranks[b] - ranks[a])
                cells[b, a] = 1.0 / cells[a, b]
            else:
                cells[b, a] = rank_gap_intensity(ranks[a] - ranks[b])
                cells[a, b] = 1.0 / cells[b, a]
    return PairwiseMatrix(cells)


# ---- AHP --------------------------------------------------------------------------------
def ahp_weights(
    matrix: PairwiseMatrix | npt.ArrayLike,
    *,
    tolerance: float = POWER_TOLERANCE,
    max_iterations: int = POWER_MAX_ITERATIONS,
) -> Tuple[WeightVector, float]:
    """Principal right eigenvector by power iteration, normalised to sum 1, and its Rayleigh estimate."""

    cells = _as_cells(matrix).astype(float)
    if not isinstance(matrix, PairwiseMatrix):
        _check_reciprocal(cells)
    m = cells.shape[0]
    if m == 1:
        return WeightVector((1.0,)), 1.0
    current = np.full(m, 1.0 / m)
    for iteration in range(1, max_iterations + 1):
        nxt = cells @ current
        nxt /= nxt.sum()
        if float(np.max(np.abs(nxt - current))) < tolerance:
            current = nxt
            break
        current = nxt
    else:
        raise NoConvergence(f"power iteration did not converge in {max_iterations} iterations (m={m})")
    lambda_max = float(current @ (cells @ current) / (current @ current))
    weights = current / math.fsum(current)
    _logger.debug("ahp m=%d iterations=%d lambda_max=%.12f", m, iteration, lambda_max)
    return WeightVector(tuple(weights)), lambda_max


def random_index(m: int, table: Mapping[int, float] | None = None) -> float:
    table = dict(table or DEFAULT_RANDOM_INDEX)
    if m in table:
        return float(table[m])
    largest = max(table)
    _logger.warning("no random index for m=%d; using RI(%d)=%.2f", m, largest, table[largest])
    return float(table[largest])


def consistency(
    matrix: PairwiseMatrix | npt.ArrayLike,
    lambda_max: float,
    *,
    ri_table: Mapping[int, float] | None = None,
    threshold: float = CR_THRESHOLD,
) -> ConsistencyReport:
    """CI = (lambda_max - m)/(m - 1), CR = CI/RI; matrices of size <= 2 are always consistent."""

    m = int(_as_cells(matrix).shape[0])
    if m <= 2:
        return ConsistencyReport(m, float(lambda_max), 0.0, random_index(m, ri_table) if m else 0.0, 0.0, True)
    ci = (lambda_max - m) / (m - 1)
    if -1e-9 < ci < 0:
        ci = 0.0
    ri = random_index(m, ri_table)
    cr = ci / ri if ri > 0 else 0.0
    return ConsistencyReport(m, float(lambda_max), float(ci), ri, float(cr), bool(cr <= threshold))


def consistent_matrix(weights: Sequence[float]) -> npt.NDArray[np.float64]:
    """``p_ab = w_a / w_b``; perfectly consistent by construction."""

    w = np.asarray(weights, dtype=float)
    return np.outer(w, 1.0 / w)


def snap_to_saaty(ratio: float) -> float:
    """Nearest value of ``{1/9, ..., 1/2, 1, ..., 9}`` on a log scale."""

    if ratio <= 0 or not math.isfinite(ratio):
        raise ValueError(f"ratio must be positive and finite, got {ratio}")
    target = math.log(ratio)
    return min(SAATY_VALUES, key=lambda v: abs(math.log(v) - target))


def estimate_random_index(m: int, samples: int = 500, seed: int = 0) -> float:
    """Mean CI of random Saaty-scale reciprocal matrices of size ``m``."""

    if m <= 2:
        return 0.0
    rng = np.random.default_rng(seed)
    upper = np.triu_indices(m, k=1)
    total = 0.0
    for _ in range(samples):
        cells = np.ones((m, m))
        draws = rng.choice(SAATY_VALUES, size=len(upper[0]))
        cells[upper] = draws
        cells[(upper[1], upper[0])] = 1.0 / draws
        _, lam = ahp_weights(cells)
        total += (lam - m) / (m - 1)
    return total / samples


__all__ = [
    "SAATY_VALUES",
    "CR_THRESHOLD",
    "ReachabilityMatrix",
    "LevelPartition",
    "PairwiseMatrix",
    "ConsistencyReport",
    "WeightVector",
    "transitive_closure",
    "ism_partition",
    "aggregate_rankings",
    "rank_gap_intensity",
    "ranks_to_comparison_matrix",
    "ahp_weights",
    "random_index",
    "consistency",
    "consistent_matrix",
    "snap_to_saaty",
    "estimate_random_index",
]
