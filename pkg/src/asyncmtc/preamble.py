"""Constant-modulus preamble pool and initial delay/activity detection.

Preambles are Zadoff-Chu sequences with pairwise-coprime roots, placed on
the symbol grid and shaped by the cascade pulse so correlation templates
match the received waveform.  Detection is a noncoherent matched filter:
per-antenna correlations are combined by root-sum-square magnitude and
scanned for local peaks over the admissible delay grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from .config import SimScenario
from .pulse import PulseBank


@dataclass(frozen=True)
class PreamblePool:
    """Unit-energy preamble rows plus their generating roots."""

    sequences: np.ndarray     # (pool_size, N_P) complex, rows unit energy
    roots: np.ndarray         # (pool_size,) int ZC roots, coprime to N_P
    cross_corr_bound: float   # max |<row_i, row_j>| over distinct pairs


def zadoff_chu(root: int, n_seq: int) -> np.ndarray:
    """Length-n ZC sequence, unit energy.

    Odd lengths use the n(n+1) phase profile, even lengths n^2; both keep
    constant per-element modulus 1/sqrt(n_seq).
    """
    n = np.arange(n_seq)
    if n_seq % 2:
        phase = -np.pi * root * n * (n + 1) / n_seq
    else:
        phase = -np.pi * root * n * n / n_seq
    return np.exp(1j * phase) / np.sqrt(n_seq)


def build_zc_pool(n_pre: int, pool_size: int) -> PreamblePool:
    """First ``pool_size`` ZC roots coprime to the length.

    Raises ValueError when the length does not admit enough coprime roots.
    """
    roots = [r for r in range(1, n_pre) if math.gcd(r, n_pre) == 1]
    if pool_size > len(roots):
        raise ValueError(
            f"length {n_pre} admits only {len(roots)} coprime roots, "
            f"{pool_size} requested"
        )
    roots = np.array(roots[:pool_size])
    seqs = np.stack([zadoff_chu(int(r), n_pre) for r in roots])
    gram = seqs @ seqs.conj().T
    np.fill_diagonal(gram, 0.0)
    bound = float(np.max(np.abs(gram))) if pool_size > 1 else 0.0
    return PreamblePool(sequences=seqs, roots=roots, cross_corr_bound=bound)


@dataclass
class InitialDetection:
    """Peak list from the preamble correlator, one row per candidate."""

    preamble_idx: np.ndarray    # (n_det,) int pool row of each peak
    offsets: np.ndarray         # (n_det,) int sample-grid delay
    peak_magnitude: np.ndarray  # (n_det,) float RSS correlation magnitude


def shaped_template(seq: np.ndarray, pulse: PulseBank) -> np.ndarray:
    """Pulse-shaped oversampled preamble; index ``half_width`` = frame start."""
    up = np.zeros((len(seq) - 1) * pulse.m_osf + 1, dtype=complex)
    up[:: pulse.m_osf] = seq
    return fftconvolve(up, pulse.z_taps.astype(complex), mode="full")


def correlation_scores(
    Y: np.ndarray, pool: PreamblePool, pulse: PulseBank, scenario: SimScenario
) -> np.ndarray:
    """Noncoherent correlation magnitude per pool row and delay offset.

    Returns (pool_size, max_offset + 1); entry [p, d] is the RSS over
    antennas of the correlation of Y against template p started at sample d.
    Window edges truncate the template tails, which only affects delays
    within a pulse span of the boundary.
    """
    n = scenario.n_samples
    n_off = scenario.max_offset + 1
    scores = np.empty((pool.sequences.shape[0], n_off))
    for p, seq in enumerate(pool.sequences):
        tpl = shaped_template(seq, pulse)
        # corr[d] = sum_i conj(tpl[i - half]) Y[d + i - half]; template start
        # d - half_width can stick out of the window, missing samples count 0.
        corr = fftconvolve(Y, tpl[::-1, None].conj(), mode="full", axes=0)
        lag0 = len(tpl) - 1 - pulse.half_width
        block = corr[lag0 : lag0 + n_off]
        scores[p] = np.sqrt(np.sum(np.abs(block) ** 2, axis=1))
    return scores


def _local_peaks(score: np.ndarray) -> np.ndarray:
    """Indices that strictly dominate both neighbors (one-sided at edges)."""
    if score.size == 1:
        return np.array([0])
    left = np.empty(score.size, dtype=bool)
    right = np.empty(score.size, dtype=bool)
    left[0] = True
    left[1:] = score[1:] > score[:-1]
    right[-1] = True
    right[:-1] = score[:-1] > score[1:]
    return np.nonzero(left & right)[0]


def correlate_and_detect(
    Y: np.ndarray,
    pool: PreamblePool,
    pulse: PulseBank,
    scenario: SimScenario,
    peak_threshold: float,
) -> InitialDetection:
    """Scan correlation scores for candidate (preamble, delay) pairs.

    Local maxima above ``peak_threshold`` are kept; within one pool row,
    peaks closer than M_OSF samples to a stronger accepted peak are dropped
    as pulse sidelobes.  At most ``n_users`` candidates survive, by
    magnitude.  Output is sorted by (preamble, offset) for determinism.
    """
    scores = correlation_scores(Y, pool, pulse, scenario)
    found: list[tuple[int, int, float]] = []
    for p in range(scores.shape[0]):
        row = scores[p]
        cand = [d for d in _local_peaks(row) if row[d] > peak_threshold]
        cand.sort(key=lambda d: row[d], reverse=True)
        kept: list[int] = []
        for d in cand:
            if all(abs(d - k) >= pulse.m_osf for k in kept):
                kept.append(d)
        found.extend((p, d, row[d]) for d in kept)
    found.sort(key=lambda t: t[2], reverse=True)
    found = found[: scenario.n_users]
    found.sort(key=lambda t: (t[0], t[1]))
    if not found:
        empty_i = np.empty(0, dtype=int)
        return InitialDetection(empty_i, empty_i.copy(), np.empty(0))
    pre, off, mag = map(np.array, zip(*found))
    return InitialDetection(
        preamble_idx=pre.astype(int),
        offsets=off.astype(int),
        peak_magnitude=mag.astype(float),
    )
