"""Transmit/receive pulse shaping.

The transmitter applies a root-raised-cosine pulse m(t) and the receiver the
matched filter q(t) = m(-t), so the post-filter symbol response is the
raised cosine z(t) = (q * m)(t).  Both responses are truncated to
``pulse_span`` symbol periods on each side and sampled on the 1/M_OSF grid,
giving banded Toeplitz operators: Z acts on placed symbols, F shapes the
receive-filtered noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import toeplitz


def raised_cosine(t, rolloff: float):
    """Raised-cosine response z(t), normalized so z(0) = 1.

    Handles the removable singularity at t = +-1/(2*rolloff).
    """
    t = np.asarray(t, dtype=float)
    if rolloff == 0.0:
        return np.sinc(t)
    out = np.empty_like(t)
    sing = np.isclose(np.abs(t), 1.0 / (2.0 * rolloff))
    tt = np.where(sing, 0.0, t)  # keep the generic branch finite
    denom = 1.0 - (2.0 * rolloff * tt) ** 2
    out = np.sinc(tt) * np.cos(np.pi * rolloff * tt) / denom
    out = np.where(sing, (np.pi / 4.0) * np.sinc(1.0 / (2.0 * rolloff)), out)
    return out


def root_raised_cosine(t, rolloff: float):
    """Unit-energy root-raised-cosine m(t); the m*m cascade equals z(t)."""
    t = np.asarray(t, dtype=float)
    if rolloff == 0.0:
        return np.sinc(t)
    out = np.empty_like(t)
    zero = np.isclose(t, 0.0)
    sing = np.isclose(np.abs(t), 1.0 / (4.0 * rolloff))
    generic = ~(zero | sing)
    tt = np.where(generic, t, 1.0)
    num = np.sin(np.pi * tt * (1.0 - rolloff)) + 4.0 * rolloff * tt * np.cos(
        np.pi * tt * (1.0 + rolloff)
    )
    den = np.pi * tt * (1.0 - (4.0 * rolloff * tt) ** 2)
    out = np.where(generic, num / den, 0.0)
    out = np.where(zero, 1.0 - rolloff + 4.0 * rolloff / np.pi, out)
    x = np.pi / (4.0 * rolloff)
    val = (rolloff / np.sqrt(2.0)) * (
        (1.0 + 2.0 / np.pi) * np.sin(x) + (1.0 - 2.0 / np.pi) * np.cos(x)
    )
    out = np.where(sing, val, out)
    return out


@dataclass(frozen=True)
class PulseBank:
    """Sampled pulse taps and the induced window-sized Toeplitz operators.

    ``z_taps``/``m_taps`` run over t = k/M_OSF for |k| <= pulse_span*M_OSF,
    center tap at index pulse_span*M_OSF.  ``Z`` and ``F`` are
    (n_samples, n_samples) with Z[i, j] = z((i - j)/M_OSF) inside the band
    and exactly zero outside it.
    """

    rolloff: float
    m_osf: int
    pulse_span: int
    z_taps: np.ndarray
    m_taps: np.ndarray
    Z: np.ndarray
    F: np.ndarray

    @property
    def half_width(self) -> int:
        """One-sided band width in samples."""
        return self.pulse_span * self.m_osf

    @classmethod
    def for_scenario(cls, scenario) -> "PulseBank":
        return build_rrc_pulse(
            scenario.rolloff, scenario.m_osf, scenario.pulse_span,
            scenario.n_samples,
        )


def _banded_toeplitz(taps: np.ndarray, half: int, n: int) -> np.ndarray:
    """Toeplitz matrix T[i, j] = taps[half + i - j], zero outside the band."""
    col = np.zeros(n)
    row = np.zeros(n)
    m = min(half, n - 1)
    col[: m + 1] = taps[half : half + m + 1]    # lags 0, +1, ..., +m
    row[: m + 1] = taps[half::-1][: m + 1]      # lags 0, -1, ..., -m
    return toeplitz(col, row)


def build_rrc_pulse(
    rolloff: float, m_osf: int, pulse_span: int = 3, n_samples: int | None = None
) -> PulseBank:
    """Sample the matched raised-cosine pair and build window operators.

    Parameters
    ----------
    rolloff : float
        Excess bandwidth in [0, 1].
    m_osf : int
        Samples per symbol period.
    pulse_span : int
        One-sided truncation in symbols; taps outside are dropped.
    n_samples : int
        Observation window length in samples (rows/cols of Z and F).
    """
    if n_samples is None:
        raise ValueError("n_samples (window length in samples) is required")
    if m_osf < 1 or pulse_span < 1:
        raise ValueError("m_osf and pulse_span must be positive")
    half = pulse_span * m_osf
    t = np.arange(-half, half + 1) / m_osf
    z_taps = raised_cosine(t, rolloff)
    m_taps = root_raised_cosine(t, rolloff)
    Z = _banded_toeplitz(z_taps, half, n_samples)
    F = _banded_toeplitz(m_taps, half, n_samples)
    return PulseBank(
        rolloff=rolloff, m_osf=m_osf, pulse_span=pulse_span,
        z_taps=z_taps, m_taps=m_taps, Z=Z, F=F,
    )
