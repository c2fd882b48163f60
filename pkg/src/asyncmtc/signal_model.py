"""Transmit-side model: frame placement, user draws, window synthesis.

Each user transmits a pulse train at a continuous delay tau (in symbol
periods); the receiver samples it on the 1/M_OSF grid, so the synthesized
signal evaluates the cascade pulse z(t) at the true fractional offsets:

    signal[i, r] = sum_k G[k, r] * sum_n frame_k[n] * z(i/M_OSF - n - tau_k)

The receiver-side linear model places symbols on the grid instead: symbol n
of a user hypothesized at offset d sits at sample d + n*M_OSF, giving
Y ~ Z X G + F W.  The two coincide exactly when M_OSF*tau is an integer;
for fractional delays the grid model carries an irreducible mismatch that
shrinks as the oversampling factor grows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import SimScenario
from .preamble import PreamblePool, build_zc_pool
from .pulse import PulseBank, raised_cosine


def frame_offset(tau: float, m_osf: int) -> int:
    """Sample index of the first frame symbol for delay tau (symbols)."""
    return math.ceil(m_osf * tau)


def frame_support(offset: int, n_frame: int, m_osf: int) -> np.ndarray:
    """Sample indices of the n_frame symbols starting at ``offset``."""
    return offset + m_osf * np.arange(n_frame)


def place_frame(symbols: np.ndarray, tau: float, scenario: SimScenario) -> np.ndarray:
    """Embed one user's frame into a length-n_samples column.

    Symbols go on the oversampled grid at ceil(M_OSF*tau) + n*M_OSF; every
    other sample is zero.  Raises ValueError when any symbol falls outside
    the window.
    """
    symbols = np.asarray(symbols)
    idx = frame_support(frame_offset(tau, scenario.m_osf), len(symbols), scenario.m_osf)
    if idx.size and (idx[0] < 0 or idx[-1] >= scenario.n_samples):
        raise ValueError(
            f"delay {tau} places symbols at samples [{idx[0]}, {idx[-1]}] "
            f"outside window of {scenario.n_samples}"
        )
    col = np.zeros(scenario.n_samples, dtype=complex)
    col[idx] = symbols
    return col


@dataclass
class UserRealization:
    """One Monte-Carlo draw of the user population."""

    alpha: np.ndarray         # (K,) bool activity
    tau: np.ndarray           # (K,) float delays, symbols
    H: np.ndarray             # (K, N_R) complex channel gains
    preamble_idx: np.ndarray  # (K,) int index into the preamble pool
    data: np.ndarray          # (K, N_D) complex payload symbols

    @property
    def G(self) -> np.ndarray:
        """Effective channel: inactive users contribute exact zeros."""
        return self.alpha[:, None] * self.H


@dataclass
class WindowObservation:
    """Synthesized receive window plus the clean components for oracles."""

    Y: np.ndarray         # (n_samples, N_R) received window
    X: np.ndarray         # (n_samples, K) placed symbol matrix
    signal: np.ndarray    # (n_samples, N_R) noiseless Z X G
    noise: np.ndarray     # (n_samples, N_R) shaped noise F W


def generate_realization(scenario: SimScenario, rng_seed) -> UserRealization:
    """Draw activity, delays, channels, preamble picks, and payloads."""
    rng = np.random.default_rng(rng_seed)
    k = scenario.n_users
    alpha = rng.random(k) < scenario.rho
    tau = rng.uniform(0.0, scenario.max_delay, size=k)
    scale = np.sqrt(scenario.chan_var / 2.0)
    H = scale * (rng.standard_normal((k, scenario.n_rx))
                 + 1j * rng.standard_normal((k, scenario.n_rx)))
    preamble_idx = rng.integers(0, scenario.pool_size, size=k)
    data = np.sqrt(0.5) * (rng.standard_normal((k, scenario.n_data))
                           + 1j * rng.standard_normal((k, scenario.n_data)))
    return UserRealization(alpha=alpha, tau=tau, H=H,
                           preamble_idx=preamble_idx, data=data)


def build_symbol_matrix(
    realization: UserRealization,
    scenario: SimScenario,
    pool: PreamblePool,
) -> np.ndarray:
    """Placed-symbol matrix X: column k carries user k's preamble + data."""
    cols = []
    for k in range(scenario.n_users):
        frame = np.concatenate(
            [pool.sequences[realization.preamble_idx[k]], realization.data[k]]
        )
        cols.append(place_frame(frame, realization.tau[k], scenario))
    return np.stack(cols, axis=1)


def user_waveform(
    frame: np.ndarray,
    tau: float,
    pulse: PulseBank,
    scenario: SimScenario,
) -> np.ndarray:
    """Oversampled receive-window samples of one pulse-shaped frame.

    Evaluates the cascade pulse at the continuous offsets i/M_OSF - n - tau,
    truncated to |t| <= pulse_span like the banded Toeplitz operator; tails
    falling outside the window are cut off.  For integer M_OSF*tau this
    reproduces pulse.Z @ place_frame(frame, tau) exactly.
    """
    frame = np.asarray(frame)
    m, span = scenario.m_osf, pulse.pulse_span
    if frame_offset(tau, m) < 0 or \
            frame_offset(tau, m) + (len(frame) - 1) * m >= scenario.n_samples:
        raise ValueError(
            f"delay {tau} places symbols outside window of {scenario.n_samples}"
        )
    # Per symbol n, samples within the pulse span around time n + tau.
    lo = math.ceil(m * (tau - span))
    rel = np.arange(2 * span * m + 1)
    idx = lo + m * np.arange(len(frame))[:, None] + rel[None, :]
    t = idx / m - np.arange(len(frame))[:, None] - tau
    vals = frame[:, None] * raised_cosine(t, pulse.rolloff)
    keep = (np.abs(t) <= span) & (idx >= 0) & (idx < scenario.n_samples)
    out = np.zeros(scenario.n_samples, dtype=complex)
    np.add.at(out, idx[keep], vals[keep])
    return out


def synthesize_window(
    realization: UserRealization,
    pulse: PulseBank,
    scenario: SimScenario,
    rng_seed,
    pool: PreamblePool | None = None,
) -> WindowObservation:
    """Superpose the active users' delayed waveforms and add shaped noise.

    The noise draw is a pure function of ``rng_seed``; the pool is rebuilt
    from the scenario when not supplied.  The X attribute of the result is
    the grid-placed symbol matrix (the receiver's representation); the
    signal itself honors the continuous delays.
    """
    if pool is None:
        pool = build_zc_pool(scenario.n_pre, scenario.pool_size)
    X = build_symbol_matrix(realization, scenario, pool)
    signal = np.zeros((scenario.n_samples, scenario.n_rx), dtype=complex)
    for k in np.flatnonzero(realization.alpha):
        frame = np.concatenate(
            [pool.sequences[realization.preamble_idx[k]], realization.data[k]]
        )
        wave = user_waveform(frame, realization.tau[k], pulse, scenario)
        signal += wave[:, None] * realization.H[k][None, :]
    rng = np.random.default_rng(rng_seed)
    w = np.sqrt(scenario.sigma_w2 / 2.0) * (
        rng.standard_normal((scenario.n_samples, scenario.n_rx))
        + 1j * rng.standard_normal((scenario.n_samples, scenario.n_rx))
    )
    noise = pulse.F @ w
    return WindowObservation(Y=signal + noise, X=X, signal=signal, noise=noise)
