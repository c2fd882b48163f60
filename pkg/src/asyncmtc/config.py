"""Scenario and algorithm configuration dataclasses.

All simulator knobs live here so experiments are reproducible from a single
frozen record.  Times are in symbol periods (T_S = 1); sample-domain
quantities carry the oversampling factor explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

# Average path gain preset (dB) for full-scale urban runs: midpoint of a
# -128.1 dB / -118.1 dB shadowing corridor.  Desk-scale runs use unit gain.
PATHLOSS_DB_PRESET = (-128.1 - 118.1) / 2.0


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


@dataclass(frozen=True)
class SimScenario:
    """Static system parameters for one simulated receive window."""

    n_users: int = 32        # K, device population
    rho: float = 0.25        # per-user activity probability
    n_rx: int = 16           # receive antennas
    n_pre: int = 16          # preamble length N_P (symbols)
    n_data: int = 32         # data payload N_D (symbols)
    n_win: int = 56          # observation window N_W (symbols)
    m_osf: int = 2           # oversampling factor (samples per symbol)
    sigma_w2: float = 0.1    # white noise variance before receive filtering
    chan_var: float = 1.0    # per-antenna channel gain variance
    rolloff: float = 0.5     # root-raised-cosine rolloff
    pulse_span: int = 3      # one-sided pulse truncation (symbols)
    pool_size: int = 4       # number of distinct preamble sequences

    def __post_init__(self) -> None:
        if self.n_users < 1 or self.n_rx < 1:
            raise ValueError("need at least one user and one antenna")
        if self.n_pre < 1 or self.n_data < 0:
            raise ValueError("preamble must be non-empty, data non-negative")
        if self.n_win < self.n_frame:
            raise ValueError(
                f"window ({self.n_win}) shorter than frame ({self.n_frame})"
            )
        if self.m_osf < 1:
            raise ValueError("oversampling factor must be >= 1")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError("activity probability must lie in [0, 1]")
        if not 0.0 <= self.rolloff <= 1.0:
            raise ValueError("rolloff must lie in [0, 1]")
        if self.sigma_w2 < 0 or self.chan_var <= 0:
            raise ValueError("variances must be positive")
        if self.pool_size < 1:
            raise ValueError("preamble pool must be non-empty")
        if self.pulse_span < 1:
            raise ValueError("pulse span must be >= 1 symbol")

    @property
    def n_frame(self) -> int:
        """Frame length N_F = N_P + N_D (symbols)."""
        return self.n_pre + self.n_data

    @property
    def n_samples(self) -> int:
        """Window length in samples, N_W * M_OSF."""
        return self.n_win * self.m_osf

    @property
    def max_delay(self) -> float:
        """Largest admissible delay (symbols): frames must end in-window."""
        return float(self.n_win - self.n_frame)

    @property
    def max_offset(self) -> int:
        """Largest admissible frame start offset on the sample grid."""
        return (self.n_win - self.n_frame) * self.m_osf

    def with_noise(self, sigma_w2: float) -> "SimScenario":
        return replace(self, sigma_w2=sigma_w2)


@dataclass(frozen=True)
class JucedConfig:
    """Inner message-passing loop controls."""

    max_iter: int = 200          # inner iteration cap U_I
    eps_conv: float = 1e-5       # stop when sum |v_g change| drops below this
    damping: float = 0.7         # blend weight on fresh means/variances
    variance_floor: float = 1e-12
    eta_th: float | None = None  # activity threshold; None -> heuristic default
    init_seed: int = 0           # seed for the small random channel init
    explosion_bound: float = 1e8  # divergence guard on means/variances
    data_prior: str = "gaussian"  # "gaussian" or "pinned_zero" (preamble-only)

    def __post_init__(self) -> None:
        if not 0.0 < self.damping <= 1.0:
            raise ValueError("damping must lie in (0, 1]")
        if self.data_prior not in ("gaussian", "pinned_zero"):
            raise ValueError(f"unknown data prior {self.data_prior!r}")


@dataclass(frozen=True)
class EmConfig:
    """Outer delay-calibration loop controls."""

    max_outer: int = 2          # outer iteration cap U_O
    eps_delay: float = 0.5      # stop when total |delay change| (samples) below
    search_radius_sym: int = 2  # +- radius in symbols; grid radius is this * M_OSF
    sweep_passes: int = 2       # coordinate sweeps per M-step
    freeze_below: float = 1e-3  # skip delay search when activity posterior under


@dataclass(frozen=True)
class ExperimentConfig:
    """Monte-Carlo sweep description for the experiment harness."""

    scenario: SimScenario = field(default_factory=SimScenario)
    snr_grid_db: tuple[float, ...] = (0.0, 5.0, 10.0, 15.0, 20.0)
    mosf_grid: tuple[int, ...] = (1, 2, 3)
    trials: int = 200
    seed: int = 1
    receivers: tuple[str, ...] = ("juced", "baseline")
    out_dir: str = "results"
    pfa_target: float = 1e-3
    cal_trials: int = 1600      # noise-only trials per threshold calibration
    # Crowded windows need a heavier blend than the library default: with
    # dozens of overlapping frames the undamped updates can settle into a
    # dim everyone-inactive fixed point, so sweeps run at 0.35.
    juced: JucedConfig = field(
        default_factory=lambda: JucedConfig(damping=0.35)
    )
    em: EmConfig = field(default_factory=EmConfig)

    def __post_init__(self) -> None:
        for r in self.receivers:
            if r not in ("juced", "baseline"):
                raise ValueError(f"unknown receiver {r!r}")
        if self.trials < 1:
            raise ValueError("need at least one trial")
        if not 0.0 < self.pfa_target <= 1.0:
            raise ValueError("false-alarm target must lie in (0, 1]")


def desk_scenario(**overrides) -> SimScenario:
    """Reduced-dimension scenario sized for laptop-scale sweeps."""
    base = dict(
        n_users=32, rho=0.25, n_rx=16, n_pre=16, n_data=32, n_win=56,
        m_osf=2, sigma_w2=0.1, chan_var=1.0, rolloff=0.5, pool_size=4,
    )
    base.update(overrides)
    return SimScenario(**base)


def fullscale_scenario(**overrides) -> SimScenario:
    """Urban macro-cell scale: 300 devices, 64 antennas, 64 preambles."""
    base = dict(
        n_users=300, rho=0.25, n_rx=64, n_pre=67, n_data=128, n_win=256,
        m_osf=2, sigma_w2=0.1, chan_var=db_to_linear(PATHLOSS_DB_PRESET),
        rolloff=0.5, pool_size=64,
    )
    base.update(overrides)
    return SimScenario(**base)
