"""Outer delay calibration: expectation-maximization over frame offsets.

The E-step is one inner message-passing run at the current delay
hypothesis.  The M-step maximizes the expected complete-data log-likelihood
over per-candidate delays by greedy coordinate search on the sample grid,
holding the posteriors fixed.  Because each coordinate move is an argmax
over a grid containing the current offset, the objective never decreases
within an M-step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import EmConfig, JucedConfig, SimScenario
from .juced import PosteriorState, data_symbols, frame_span_stats, run_juced
from .preamble import InitialDetection, PreamblePool, correlate_and_detect
from .pulse import PulseBank
from .whitening import prewhiten


@dataclass
class DelayEstimate:
    """Sample-grid delay hypothesis for a candidate set."""

    offsets: np.ndarray       # (Kc,) int frame start samples
    preamble_idx: np.ndarray  # (Kc,) int pool rows
    active_mask: np.ndarray   # (Kc,) bool current activity decisions

    @classmethod
    def from_detection(cls, det: InitialDetection) -> "DelayEstimate":
        return cls(
            offsets=det.offsets.astype(int).copy(),
            preamble_idx=det.preamble_idx.astype(int).copy(),
            active_mask=np.ones(len(det.offsets), dtype=bool),
        )

    def copy(self) -> "DelayEstimate":
        return DelayEstimate(
            self.offsets.copy(), self.preamble_idx.copy(),
            self.active_mask.copy(),
        )


def _place_stats(offsets, span_mean, span_var, scenario: SimScenario):
    """Scatter per-candidate frame-span stats into window-sized matrices."""
    kc = len(offsets)
    span = scenario.n_frame * scenario.m_osf
    X = np.zeros((scenario.n_samples, kc), dtype=complex)
    V = np.zeros((scenario.n_samples, kc))
    idx = np.asarray(offsets)[:, None] + np.arange(span)
    cols = np.repeat(np.arange(kc), span)
    X[idx.ravel(), cols] = span_mean.ravel()
    V[idx.ravel(), cols] = span_var.ravel()
    return X, V


def _objective_from_stats(
    offsets, span_mean, span_var, g_hat, v_g, Y_white, Z_white, sigma_w2,
    scenario: SimScenario,
) -> float:
    """Expected complete-data log-likelihood (up to constants) at a delay set."""
    if len(offsets) == 0:
        return 0.0
    X, V = _place_stats(offsets, span_mean, span_var, scenario)
    P = Z_white @ X
    colsq = (Z_white ** 2).sum(axis=0)
    M = P.conj().T @ P
    M[np.diag_indices_from(M)] += colsq @ V
    S = g_hat @ g_hat.conj().T
    S[np.diag_indices_from(S)] += v_g.sum(axis=1)
    lin = 2.0 * np.real(np.vdot(Y_white, P @ g_hat))
    quad = np.real(np.sum(M * S.T))
    prior = float((np.abs(span_mean) ** 2).sum() + span_var.sum())
    return float((lin - quad) / sigma_w2 - prior)


def estep_objective(
    tau: DelayEstimate,
    posterior: PosteriorState,
    Y_white: np.ndarray,
    Z_white: np.ndarray,
    sigma_w2: float,
    scenario: SimScenario,
) -> float:
    """Evaluate the M-step objective at hypothesized delays.

    Each candidate's posterior frame-span means/variances are lifted from
    the support the posterior was computed under and re-placed at ``tau``.
    """
    span_mean, span_var = frame_span_stats(posterior, scenario)
    return _objective_from_stats(
        tau.offsets, span_mean, span_var, posterior.g_hat, posterior.v_g,
        Y_white, Z_white, sigma_w2, scenario,
    )


def greedy_mstep(
    tau: DelayEstimate,
    posterior: PosteriorState,
    Y_white: np.ndarray,
    Z_white: np.ndarray,
    sigma_w2: float,
    config: EmConfig,
    scenario: SimScenario,
) -> DelayEstimate:
    """Coordinate ascent on the delay grid, strongest candidates first.

    Each candidate scans offsets within ``search_radius_sym`` symbols of its
    current value (clipped to the window); ties prefer the smaller delay.
    Offsets occupied by another same-preamble candidate are skipped so no
    two candidates collapse onto identical columns.  Candidates whose
    activity posterior is under ``freeze_below`` keep their offset.  The
    fixed-posterior objective is non-decreasing across moves.
    """
    out = tau.copy()
    kc = len(out.offsets)
    if kc == 0:
        return out
    span_mean, span_var = frame_span_stats(posterior, scenario)
    g = posterior.g_hat
    S = g @ g.conj().T
    S[np.diag_indices_from(S)] += posterior.v_g.sum(axis=1)
    W = Y_white @ g.conj().T
    colsq = (Z_white ** 2).sum(axis=0)
    X, _ = _place_stats(out.offsets, span_mean, span_var, scenario)
    P = Z_white @ X
    radius = config.search_radius_sym * scenario.m_osf
    order = np.argsort(-posterior.activity_stat, kind="stable")
    frozen = posterior.activity_posterior < config.freeze_below

    span = np.arange(scenario.n_frame * scenario.m_osf)
    for _ in range(config.sweep_passes):
        changed = False
        for k in order:
            if frozen[k]:
                continue
            d_cur = int(out.offsets[k])
            lo = max(0, d_cur - radius)
            hi = min(scenario.max_offset, d_cur + radius)
            taken = {
                int(out.offsets[j]) for j in range(kc)
                if j != k and out.preamble_idx[j] == out.preamble_idx[k]
            }
            skk = float(S[k, k].real)
            u = P @ S[:, k] - P[:, k] * S[k, k]  # cross terms vs. others
            best_d, best_score = d_cur, -np.inf
            for d in range(lo, hi + 1):
                if d in taken:
                    continue
                pos = d + span
                pcol = Z_white[:, pos] @ span_mean[k]
                dkk = float(colsq[pos] @ span_var[k])
                score = (
                    2.0 * np.real(np.vdot(W[:, k], pcol))
                    - (np.real(np.vdot(pcol, pcol)) + dkk) * skk
                    - 2.0 * np.real(np.vdot(u, pcol))
                )
                if score > best_score:  # first max wins: smaller delay on ties
                    best_d, best_score = d, score
            if best_d != d_cur:
                out.offsets[k] = best_d
                P[:, k] = Z_white[:, out.offsets[k] + span] @ span_mean[k]
                changed = True
        if not changed:
            break
    return out


@dataclass
class EmTraceRow:
    """One outer iteration: objective before/after the M-step."""

    outer_idx: int
    f_before: float
    f_after: float
    offsets_before: np.ndarray
    offsets_after: np.ndarray
    delay_change: int


@dataclass
class EmResult:
    """Full receiver state after delay calibration."""

    delays: DelayEstimate        # final refined delays + activity decisions
    posterior: PosteriorState    # from the last E-step (its own offsets inside)
    detection: InitialDetection
    trace: list[EmTraceRow] = field(default_factory=list)

    @property
    def n_outer(self) -> int:
        return len(self.trace)


@dataclass
class ReceiverOutput:
    """What a receiver hands to the metrics layer."""

    offsets: np.ndarray       # (Kc,) final sample-grid delay estimates
    preamble_idx: np.ndarray  # (Kc,) pool rows
    activity: np.ndarray      # (Kc,) bool detections
    g_hat: np.ndarray         # (Kc, N_R) channel estimates
    x_data_hat: np.ndarray    # (Kc, N_D) payload estimates
    em_iterations: int = 0
    diverged: bool = False
    rank_deficient: bool = False

    @classmethod
    def from_em_result(cls, result: "EmResult", scenario: SimScenario):
        post = result.posterior
        return cls(
            offsets=result.delays.offsets.copy(),
            preamble_idx=result.delays.preamble_idx.copy(),
            activity=post.alpha_hat.copy(),
            g_hat=post.g_hat.copy(),
            x_data_hat=data_symbols(post, scenario),
            em_iterations=result.n_outer,
            diverged=post.diverged,
        )


def run_em(
    Y: np.ndarray,
    pulse: PulseBank,
    pool: PreamblePool,
    scenario: SimScenario,
    juced_cfg: JucedConfig,
    em_cfg: EmConfig,
    peak_threshold: float = 0.0,
    detection: InitialDetection | None = None,
) -> EmResult:
    """Detect candidates, then alternate inner runs with delay refinement.

    Stops when the summed absolute delay change falls under ``eps_delay``
    or after ``max_outer`` iterations.  The returned posterior is the one
    produced by the final E-step; when the loop stops by convergence its
    support agrees with the returned delays.  ``detection`` overrides the
    correlation stage with an externally supplied candidate set.
    """
    if detection is None:
        det = correlate_and_detect(Y, pool, pulse, scenario, peak_threshold)
    else:
        det = detection
    Y_white, Z_white, _ = prewhiten(Y, pulse)
    tau = DelayEstimate.from_detection(det)
    trace: list[EmTraceRow] = []
    posterior = None
    if len(tau.offsets) == 0:
        posterior = run_juced(Y_white, Z_white, tau, pool, juced_cfg, scenario)
        return EmResult(delays=tau, posterior=posterior, detection=det, trace=trace)
    for outer in range(1, em_cfg.max_outer + 1):
        posterior = run_juced(Y_white, Z_white, tau, pool, juced_cfg, scenario)
        new_tau = greedy_mstep(
            tau, posterior, Y_white, Z_white, scenario.sigma_w2, em_cfg, scenario
        )
        f_before = estep_objective(
            tau, posterior, Y_white, Z_white, scenario.sigma_w2, scenario
        )
        f_after = estep_objective(
            new_tau, posterior, Y_white, Z_white, scenario.sigma_w2, scenario
        )
        change = int(np.abs(new_tau.offsets - tau.offsets).sum())
        trace.append(EmTraceRow(
            outer_idx=outer, f_before=f_before, f_after=f_after,
            offsets_before=tau.offsets.copy(),
            offsets_after=new_tau.offsets.copy(),
            delay_change=change,
        ))
        tau = new_tau
        if change < em_cfg.eps_delay:
            break
    tau.active_mask = posterior.alpha_hat.copy()
    return EmResult(delays=tau, posterior=posterior, detection=det, trace=trace)
