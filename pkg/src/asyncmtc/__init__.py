"""Asynchronous grant-free access: waveform simulator and joint receivers.

Modules
-------
config        scenario and algorithm dataclasses
pulse         matched root-raised-cosine pair, banded window operators
signal_model  frame placement, user draws, window synthesis
preamble      constant-modulus pool, correlation detection
whitening     receive-filter noise whitening
juced         bilinear message-passing inner loop
em            delay-calibration outer loop
baseline      preamble-only reference receiver with LS data detection
metrics       candidate matching and error metrics
calibration   false-alarm threshold calibration
sweep         Monte-Carlo harness, CSV/plot-data emission
cli           command-line entry point
"""

__version__ = "0.1.0"

from .baseline import ls_data_detect, uad_dc_baseline
from .calibration import Thresholds, calibrate_thresholds, measure_noise_only_pfa
from .config import (
    EmConfig,
    ExperimentConfig,
    JucedConfig,
    SimScenario,
    desk_scenario,
    fullscale_scenario,
)
from .em import (
    DelayEstimate,
    EmResult,
    ReceiverOutput,
    estep_objective,
    greedy_mstep,
    run_em,
)
from .juced import PosteriorState, run_juced
from .metrics import TrialMetrics, compute_metrics
from .preamble import InitialDetection, PreamblePool, build_zc_pool, correlate_and_detect
from .pulse import PulseBank, build_rrc_pulse
from .signal_model import (
    UserRealization,
    WindowObservation,
    generate_realization,
    place_frame,
    synthesize_window,
)
from .sweep import emit_plotdata, run_sweep, sigma_for_snr
from .whitening import prewhiten
