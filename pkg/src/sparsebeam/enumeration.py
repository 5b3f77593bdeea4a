"""Exhaustive search over all P-of-N configurations: the trusted oracle.

Subsets are visited in lexicographic order of their sorted index tuples, and
that order defines the stable rank_id used in files. Evaluation is chunked
batched linear algebra; the reduction keeps the first configuration within a
1e-12 relative tie band, so the argmax is the lexicographically smallest
optimal subset and is independent of chunking.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import beamformer, scene
from .beamformer import Sinr, mask_bits, mask_from_indices

DEFAULT_BUDGET = 10_000_000
REL_TIE_TOL = 1e-12
_CHUNK = 1 << 16


class BudgetExceededError(RuntimeError):
    def __init__(self, n: int, p: int, count: int, budget: int):
        super().__init__(
            f"C({n},{p}) = {count} subsets exceeds the enumeration budget of {budget}"
        )
        self.count = count
        self.budget = budget


@dataclass(frozen=True)
class RankedConfiguration:
    rank_id: int
    mask: np.ndarray
    sinr: Sinr
    objective: float | None = None


def subset_rank(indices, n: int) -> int:
    """Rank of a sorted index tuple in lexicographic subset order."""
    indices = sorted(int(i) for i in indices)
    p = len(indices)
    if p == 0 or indices[0] < 0 or indices[-1] >= n:
        raise ValueError(f"subset indices must lie in [0, {n})")
    if len(set(indices)) != p:
        raise ValueError("subset indices must be distinct")
    rank = 0
    prev = -1
    for i, c in enumerate(indices):
        for v in range(prev + 1, c):
            rank += math.comb(n - 1 - v, p - 1 - i)
        prev = c
    return rank


def subset_unrank(rank: int, n: int, p: int) -> tuple[int, ...]:
    """Sorted index tuple at `rank` in lexicographic subset order."""
    if not 0 <= rank < math.comb(n, p):
        raise ValueError(f"rank {rank} out of range for C({n},{p})")
    out = []
    v = 0
    remaining = p
    while remaining > 0:
        c = math.comb(n - 1 - v, remaining - 1)
        if rank < c:
            out.append(v)
            remaining -= 1
        else:
            rank -= c
        v += 1
    return tuple(out)


def _first_near_max(vals: np.ndarray) -> int:
    """First index whose value sits in the relative tie band of the maximum.

    A configuration and its grid-reversed mirror achieve identical SINR in
    exact arithmetic but differ by ~1e-14 in floats; a bare argmax would pick
    a side at random. Values are positive.
    """
    return int(np.argmax(vals >= vals.max() / (1.0 + REL_TIE_TOL)))


def _first_near_min(vals: np.ndarray) -> int:
    return int(np.argmax(vals <= vals.min() * (1.0 + REL_TIE_TOL)))


def _check_budget(n: int, p: int, budget: int) -> int:
    if not 1 <= p <= n:
        raise ValueError(f"P must satisfy 1 <= P <= N, got P={p}, N={n}")
    count = math.comb(n, p)
    if count > budget:
        raise BudgetExceededError(n, p, count, budget)
    return count


def _iter_subset_chunks(n: int, p: int, chunk: int = _CHUNK):
    """Yield (start_rank, (m, p) index array) chunks in lexicographic order."""
    it = itertools.combinations(range(n), p)
    start = 0
    while True:
        block = list(itertools.islice(it, chunk))
        if not block:
            return
        yield start, np.array(block, dtype=np.intp)
        start += len(block)


def _all_subset_sinrs(geom, scn, p: int) -> np.ndarray:
    _, r_sn, _ = scene.correlation_matrices(geom, scn)
    steer = scene.steering_vector(geom, scn.desired.doa_deg)
    out = np.empty(math.comb(geom.n_grid, p))
    for start, subsets in _iter_subset_chunks(geom.n_grid, p):
        out[start:start + len(subsets)] = beamformer.subset_sinr_batch(
            r_sn, steer, scn.desired.power, subsets
        )
    return out


def enumerate_best(geom, scn, p: int, budget: int = DEFAULT_BUDGET) -> RankedConfiguration:
    """Globally MaxSINR configuration; ties go to the smallest index tuple."""
    _check_budget(geom.n_grid, p, budget)
    _, r_sn, _ = scene.correlation_matrices(geom, scn)
    steer = scene.steering_vector(geom, scn.desired.doa_deg)
    best_val = -np.inf
    best_rank = -1
    best_subset = None
    for start, subsets in _iter_subset_chunks(geom.n_grid, p):
        vals = beamformer.subset_sinr_batch(r_sn, steer, scn.desired.power, subsets)
        k = _first_near_max(vals)
        if vals[k] > best_val * (1.0 + REL_TIE_TOL):
            best_val = vals[k]
            best_rank = start + k
            best_subset = subsets[k]
    return RankedConfiguration(
        rank_id=best_rank,
        mask=mask_from_indices(best_subset, geom.n_grid),
        sinr=Sinr(float(best_val)),
    )


def enumerate_worst(geom, scn, p: int, budget: int = DEFAULT_BUDGET) -> RankedConfiguration:
    """Globally minimum-SINR configuration (the worst-case baseline)."""
    _check_budget(geom.n_grid, p, budget)
    _, r_sn, _ = scene.correlation_matrices(geom, scn)
    steer = scene.steering_vector(geom, scn.desired.doa_deg)
    worst_val = np.inf
    worst_rank = -1
    worst_subset = None
    for start, subsets in _iter_subset_chunks(geom.n_grid, p):
        vals = beamformer.subset_sinr_batch(r_sn, steer, scn.desired.power, subsets)
        k = _first_near_min(vals)
        if vals[k] < worst_val * (1.0 - REL_TIE_TOL):
            worst_val = vals[k]
            worst_rank = start + k
            worst_subset = subsets[k]
    return RankedConfiguration(
        rank_id=worst_rank,
        mask=mask_from_indices(worst_subset, geom.n_grid),
        sinr=Sinr(float(worst_val)),
    )


def enumerate_all_ranked(geom, scn, p: int, with_objective: bool = False,
                         dft_length: int | None = None,
                         budget: int = DEFAULT_BUDGET) -> list[RankedConfiguration]:
    """All C(N,P) configurations, sorted.

    With `with_objective`, entries carry the spectral-overlap objective and the
    list is sorted ascending by it (the diagnostic-plot x-axis); otherwise the
    sort is descending by SINR. Ties keep lexicographic subset order.
    """
    count = _check_budget(geom.n_grid, p, budget)
    sinrs = _all_subset_sinrs(geom, scn, p)
    ranks = np.arange(count)

    omegas = None
    if with_objective:
        from . import sbsa

        k = dft_length if dft_length is not None else sbsa.default_dft_length(geom.n_grid)
        omegas = np.empty(count)
        for start, subsets in _iter_subset_chunks(geom.n_grid, p):
            masks = np.zeros((len(subsets), geom.n_grid), dtype=int)
            np.put_along_axis(masks, subsets, 1, axis=1)
            omegas[start:start + len(subsets)] = sbsa.omega_batch(masks, geom, scn, k)
        order = np.lexsort((ranks, omegas))
    else:
        order = np.lexsort((ranks, -sinrs))

    out = []
    for idx in order:
        idx = int(idx)
        out.append(RankedConfiguration(
            rank_id=idx,
            mask=mask_from_indices(subset_unrank(idx, geom.n_grid, p), geom.n_grid),
            sinr=Sinr(float(sinrs[idx])),
            objective=float(omegas[idx]) if omegas is not None else None,
        ))
    return out


def write_ranked_csv(path, ranked: list[RankedConfiguration]):
    """Dump a ranked list as CSV: rank_id, mask_bits, sinr_db, omega."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["rank_id", "mask_bits", "sinr_db", "omega"])
        for rc in ranked:
            w.writerow([
                rc.rank_id,
                mask_bits(rc.mask),
                repr(rc.sinr.db),
                "" if rc.objective is None else repr(rc.objective),
            ])
