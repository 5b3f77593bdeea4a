"""Spectral-overlap sensor selection (greedy, multi-start).

A configuration is judged by how much the masked desired-source spatial
spectrum overlaps each masked interferer spectrum: the objective is the
bin-wise product of the two power spectra summed over DFT bins and
interferers, weighted by the source powers. Spectra are DFTs of the
conjugate-symmetric deterministic autocorrelation of the masked signal,
which (for DFT length K >= 2N-1, no aliasing) coincides with the squared
magnitude of the masked signal's zero-padded DFT. Greedy selection adds one
sensor at a time, minimizing the objective over the unselected grid
locations; one pass is run per starting location and the configuration with
the best output SINR wins.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import beamformer, scene
from .beamformer import Sinr, mask_from_indices, validate_mask

SPECTRUM_IMAG_TOL = 1e-10
_REL_TIE_TOL = 1e-12


def next_pow2(n: int) -> int:
    k = 1
    while k < n:
        k *= 2
    return k


def default_dft_length(n_grid: int) -> int:
    return 2 * next_pow2(n_grid)


@dataclass(frozen=True)
class SbsaConfig:
    """Knobs for the greedy search.

    dft_length None means 2 * next_pow2(N); n_starts None means one start per
    grid location (deterministic and exhaustive). When n_starts is below N the
    starts are drawn without replacement using rng_seed; start_indices
    overrides both.
    """

    dft_length: int | None = None
    n_starts: int | None = None
    rng_seed: int = 0
    start_indices: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.n_starts is not None and self.n_starts < 1:
            raise ValueError("n_starts must be >= 1")

    def resolve_dft_length(self, n_grid: int) -> int:
        k = self.dft_length if self.dft_length is not None else default_dft_length(n_grid)
        if k < 2 * n_grid - 1:
            raise ValueError(f"dft_length {k} < 2N-1 = {2 * n_grid - 1} aliases the autocorrelation")
        return k

    def resolve_starts(self, n_grid: int) -> list[int]:
        if self.start_indices is not None:
            return sorted(int(i) for i in self.start_indices)
        if self.n_starts is None or self.n_starts >= n_grid:
            return list(range(n_grid))
        rng = np.random.default_rng(self.rng_seed)
        return sorted(rng.choice(n_grid, size=self.n_starts, replace=False).tolist())


def selection_autocorrelation(mask) -> np.ndarray:
    """Lag redundancy of a selection mask: integer counts for lags -(N-1)..N-1.

    counts[N-1+k] is the number of active sensor pairs separated by k grid
    units; the center entry (lag 0) equals P and the counts sum to P^2.
    """
    z = validate_mask(mask)
    return np.correlate(z, z, mode="full")


def redundancy_lags(n_grid: int) -> np.ndarray:
    return np.arange(-(n_grid - 1), n_grid)


def _autocorr_fft(rows: np.ndarray, k: int) -> np.ndarray:
    """Complex K-point DFT of the autocorrelation of each row (lags wrapped)."""
    rows = np.atleast_2d(np.asarray(rows, dtype=complex))
    m, n = rows.shape
    if k < 2 * n - 1:
        raise ValueError(f"dft_length {k} < 2N-1 = {2 * n - 1} aliases the autocorrelation")
    buf = np.zeros((m, k), dtype=complex)
    for lag in range(n):
        a = np.sum(rows[:, lag:] * rows[:, : n - lag].conj(), axis=1)
        buf[:, lag] = a
        if lag > 0:
            buf[:, k - lag] = a.conj()
    return np.fft.fft(buf, axis=1)


def signal_spectrum(vec, dft_length: int) -> np.ndarray:
    """K-point spatial power spectrum of a (masked) array signal.

    DFT of the conjugate-symmetric autocorrelation of `vec`, zero-padded to
    `dft_length` (must be >= 2N-1). The result is real up to rounding; the
    real part is returned, clamped at zero.
    """
    spec = _autocorr_fft(np.asarray(vec, dtype=complex)[None, :], dft_length)[0]
    scale = max(float(np.abs(spec).max()), 1.0)
    if float(np.abs(spec.imag).max()) > SPECTRUM_IMAG_TOL * scale:
        raise ValueError("spectrum has non-negligible imaginary residue")
    return np.maximum(spec.real, 0.0)


def omega_batch(masks: np.ndarray, geom, scn, dft_length: int) -> np.ndarray:
    """Spectral-overlap objective for each mask row (shared scenario)."""
    masks = np.atleast_2d(np.asarray(masks))
    m = masks.shape[0]
    if masks.shape[1] != geom.n_grid:
        raise ValueError("mask length must equal the grid size")
    if scn.n_interferers == 0:
        return np.zeros(m)

    signals = [scene.steering_vector(geom, scn.desired.doa_deg)]
    signals += [scene.steering_vector(geom, src.doa_deg) for src in scn.interferers]
    sig = np.stack(signals)                       # (L+1, N)
    rows = masks[:, None, :] * sig[None, :, :]    # (M, L+1, N)
    spec = _autocorr_fft(rows.reshape(-1, geom.n_grid), dft_length).real
    spec = np.maximum(spec, 0.0).reshape(m, sig.shape[0], dft_length)

    des = scn.desired.power * spec[:, 0, :]
    total = np.zeros(m)
    for l, src in enumerate(scn.interferers):
        total += np.sum(des * (src.power * spec[:, 1 + l, :]), axis=1)
    return total


def omega(mask, geom, scn, dft_length: int | None = None) -> float:
    """Spectral overlap of one configuration; zero when there is no interferer."""
    z = validate_mask(mask, n_grid=geom.n_grid)
    k = dft_length if dft_length is not None else default_dft_length(geom.n_grid)
    return float(omega_batch(z[None, :], geom, scn, k)[0])


@dataclass
class StartTrace:
    """One greedy pass: the start index, (chosen index, objective) per step,
    and the completed configuration with its SINR."""

    start: int
    steps: list[tuple[int, float]]
    mask: np.ndarray
    sinr: Sinr


@dataclass
class SbsaResult:
    mask: np.ndarray
    weights: np.ndarray
    sinr: Sinr
    starts: list[StartTrace] = field(default_factory=list)


def sbsa_select(geom, scn, p: int, cfg: SbsaConfig | None = None) -> SbsaResult:
    """Greedy spectral-overlap selection with multi-start SINR ranking.

    Every start places one seed sensor, then grows the set one location at a
    time, choosing the unselected grid point of minimum objective (ties to the
    lowest index). The completed configurations are ranked by exact output
    SINR and the winner's MaxSINR weights are computed on its subarray.
    """
    n = geom.n_grid
    if not 1 <= p <= n:
        raise ValueError(f"P must satisfy 1 <= P <= N, got P={p}, N={n}")
    cfg = cfg or SbsaConfig()
    k = cfg.resolve_dft_length(n)
    starts = cfg.resolve_starts(n)

    selected = [[s] for s in starts]
    step_logs: list[list[tuple[int, float]]] = [[] for _ in starts]
    for _ in range(p - 1):
        cand = [[i for i in range(n) if i not in set(sel)] for sel in selected]
        n_cand = len(cand[0])
        masks = np.zeros((len(starts), n_cand, n), dtype=int)
        for si, sel in enumerate(selected):
            masks[si, :, sel] = 1
            masks[si, np.arange(n_cand), cand[si]] = 1
        vals = omega_batch(masks.reshape(-1, n), geom, scn, k).reshape(len(starts), n_cand)
        for si in range(len(starts)):
            # tie band: mirror-symmetric candidates produce equal objectives up
            # to rounding; take the lowest grid index among near-ties
            floor = vals[si].min()
            j = int(np.argmax(vals[si] <= floor + _REL_TIE_TOL * max(abs(floor), 1.0)))
            selected[si].append(cand[si][j])
            step_logs[si].append((cand[si][j], float(vals[si][j])))

    r_s, r_sn, r_xx = scene.correlation_matrices(geom, scn)
    steer = scene.steering_vector(geom, scn.desired.doa_deg)
    subsets = np.array([sorted(sel) for sel in selected], dtype=np.intp)
    sinrs = beamformer.subset_sinr_batch(r_sn, steer, scn.desired.power, subsets)

    best = 0
    for si in range(1, len(starts)):
        if sinrs[si] > sinrs[best] * (1.0 + _REL_TIE_TOL):
            best = si

    traces = [
        StartTrace(start=starts[si], steps=step_logs[si],
                   mask=mask_from_indices(selected[si], n), sinr=Sinr(float(sinrs[si])))
        for si in range(len(starts))
    ]
    best_mask = traces[best].mask
    weights = beamformer.max_sinr_weights(r_s, r_xx, mask=best_mask)
    return SbsaResult(mask=best_mask, weights=weights, sinr=traces[best].sinr, starts=traces)
