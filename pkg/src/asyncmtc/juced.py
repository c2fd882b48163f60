"""Joint activity/channel/data estimation by bilinear message passing.

The whitened window factorizes as Y = B G + noise with B = Z X: both the
shaped symbol matrix B and the channel G are unknown, coupled through the
placed symbols X.  One inner iteration propagates Gaussian messages around
the loop

    (B, G) -> output plane -> channel denoiser -> G
            -> bilinear input -> b denoiser -> B -> symbol denoiser -> X

with Onsager-corrected means and scalar-variance bookkeeping.  Symbol slots
carry their structural priors: preamble positions are pinned to the known
sequence, every sample of the data span carries a unit Gaussian prior (or
is pinned to zero in preamble-only mode), and everything outside the frame
span is exactly zero.

Iteration bookkeeping follows the usual vintage rules: the output-plane and
input-plane messages are formed from the iteration-start estimates, fresh
channel/symbol estimates land only after their denoisers, and the scaled
residuals beta/gamma from the previous iteration feed the Onsager terms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .config import JucedConfig, SimScenario
from .preamble import PreamblePool
from .signal_model import frame_support


# --- message updates ---------------------------------------------------------


def forward_output_message(b_hat, v_b, g_hat, v_g, beta_prev, floor=1e-12):
    """Plugin estimate of the noiseless output plane A = B G.

    Returns (p_hat, v_p); the Onsager term subtracts the previous scaled
    residual times the interference variance.
    """
    interf = np.abs(b_hat) ** 2 @ v_g + v_b @ np.abs(g_hat) ** 2
    v_p = interf + v_b @ v_g
    p_hat = b_hat @ g_hat - beta_prev * interf
    return p_hat, np.maximum(v_p, floor)


def output_denoiser(p_hat, v_p, Y, sigma_w2):
    """Posterior on the noiseless output under the white Gaussian channel."""
    denom = v_p + sigma_w2
    a_hat = (v_p * Y + sigma_w2 * p_hat) / denom
    v_a = v_p * sigma_w2 / denom
    return a_hat, v_a


def scaled_residual(Y, p_hat, v_p, sigma_w2):
    """Output-plane residual beta = (a_hat - p_hat)/v_p and its variance.

    Written in the cancelled form (Y - p_hat)/(v_p + sigma_w2), which is
    algebraically identical and stable when v_p is tiny.
    """
    denom = v_p + sigma_w2
    return (Y - p_hat) / denom, 1.0 / denom


def channel_message(b_hat, v_b, beta, v_beta, g_hat, floor=1e-12):
    """Pseudo-observation (q_hat, v_q) of each channel coefficient.

    When a column of b_hat vanishes the precision hits the floor and the
    message degenerates to (g_hat, 1/floor), i.e. carries no information.
    """
    denom = np.maximum((np.abs(b_hat) ** 2).T @ v_beta, floor)
    v_q = 1.0 / denom
    onsager = (v_b.T @ v_beta) / denom
    q_hat = g_hat * (1.0 - onsager) + (b_hat.conj().T @ beta) / denom
    return q_hat, v_q


def channel_denoiser(q_hat, v_q, rho, chan_var, floor=1e-12):
    """Row-coupled Bernoulli-Gaussian posterior on the channel matrix.

    All antennas of one user share the activity bit, so the log-likelihood
    ratio sums over the row before the sigmoid.  Returns
    (g_hat, v_g, activity_posterior).
    """
    s = chan_var + v_q
    mag2 = np.abs(q_hat) ** 2
    row_llr = (mag2 / v_q - mag2 / s + np.log(v_q / s)).sum(axis=1)
    if rho <= 0.0:
        pi = np.zeros(q_hat.shape[0])
    elif rho >= 1.0:
        pi = np.ones(q_hat.shape[0])
    else:
        pi = expit(row_llr + np.log(rho / (1.0 - rho)))
    gain = chan_var / s
    mmse = gain * q_hat
    g_hat = pi[:, None] * mmse
    second = pi[:, None] * (gain * v_q + np.abs(mmse) ** 2)
    v_g = np.maximum(second - np.abs(g_hat) ** 2, floor)
    return g_hat, v_g, pi


def bilinear_input_message(b_hat, beta, v_beta, g_hat, v_g, floor=1e-12):
    """Pseudo-observation (r_hat, v_r) of the shaped symbol matrix B."""
    denom = np.maximum(v_beta @ (np.abs(g_hat) ** 2).T, floor)
    v_r = 1.0 / denom
    onsager = (v_beta @ v_g.T) / denom
    r_hat = b_hat * (1.0 - onsager) + (beta @ g_hat.conj().T) / denom
    return r_hat, v_r


def linear_forward_message(Z_white, Zw_sq, x_hat, v_x, gamma_prev, floor=1e-12):
    """Plugin estimate (o_hat, v_o) of B = Z X from the symbol posteriors."""
    v_o = Zw_sq @ v_x
    o_hat = Z_white @ x_hat - gamma_prev * v_o
    return o_hat, np.maximum(v_o, floor)


def b_denoiser(r_hat, v_r, o_hat, v_o):
    """Product of the two Gaussian views of B (precision-weighted mean)."""
    tot = v_r + v_o
    b_hat = (v_o * r_hat + v_r * o_hat) / tot
    v_b = v_r * v_o / tot
    return b_hat, v_b


def b_residual(r_hat, o_hat, v_r, v_o):
    """Input-plane residual gamma = (b_hat_new - o_hat)/v_o, stable form.

    Substituting the b denoiser output gives (r_hat - o_hat)/(v_r + v_o)
    and variance 1/(v_r + v_o).
    """
    tot = v_r + v_o
    return (r_hat - o_hat) / tot, 1.0 / tot


def symbol_message(Z_white, Zw_sq, x_hat, gamma, v_gamma, floor=1e-12):
    """Pseudo-observation (m_hat, v_m) of the placed symbols X."""
    denom = np.maximum(Zw_sq.T @ v_gamma, floor)
    v_m = 1.0 / denom
    m_hat = x_hat + v_m * (Z_white.T @ gamma)
    return m_hat, v_m


def symbol_denoiser(m_hat, v_m, prior_mean, data_mask):
    """Slot-wise symbol posterior.

    Data slots shrink toward zero under the unit Gaussian prior; every
    other slot (preamble, off-grid, pinned zero) is a delta at its prior
    mean with zero variance.
    """
    x_hat = np.where(data_mask, m_hat / (1.0 + v_m), prior_mean)
    v_x = np.where(data_mask, v_m / (1.0 + v_m), 0.0)
    return x_hat, v_x


# --- state and runner --------------------------------------------------------


@dataclass
class PosteriorState:
    """Final iterate of the inner loop, with all message caches."""

    offsets: np.ndarray          # (Kc,) sample-grid delays the loop ran under
    preamble_idx: np.ndarray     # (Kc,) pool rows of the candidates
    x_hat: np.ndarray            # (N, Kc) symbol means
    v_x: np.ndarray
    g_hat: np.ndarray            # (Kc, N_R) channel means
    v_g: np.ndarray
    b_hat: np.ndarray            # (N, Kc) shaped-symbol means
    v_b: np.ndarray
    p_hat: np.ndarray            # (N, N_R) output-plane messages
    v_p: np.ndarray
    a_hat: np.ndarray
    v_a: np.ndarray
    beta_hat: np.ndarray
    v_beta: np.ndarray
    q_hat: np.ndarray            # (Kc, N_R) channel pseudo-observations
    v_q: np.ndarray
    r_hat: np.ndarray            # (N, Kc) input-plane pseudo-observations
    v_r: np.ndarray
    o_hat: np.ndarray
    v_o: np.ndarray
    gamma_hat: np.ndarray
    v_gamma: np.ndarray
    m_hat: np.ndarray            # (N, Kc) symbol pseudo-observations
    v_m: np.ndarray
    data_mask: np.ndarray        # (N, Kc) bool, True on data symbol slots
    activity_posterior: np.ndarray  # (Kc,) row activity probabilities
    activity_stat: np.ndarray    # (Kc,) sum over antennas of |g_hat|^2
    alpha_hat: np.ndarray        # (Kc,) bool activity decisions
    iterations: int
    converged: bool
    diverged: bool
    residual_trace: np.ndarray


def build_symbol_prior(
    offsets, preamble_idx, pool: PreamblePool, scenario: SimScenario,
    data_prior: str = "gaussian",
):
    """Prior mean/variance matrices and the data-slot mask for candidates."""
    offsets = np.asarray(offsets, dtype=int)
    if offsets.size and (offsets.min() < 0 or offsets.max() > scenario.max_offset):
        raise ValueError("candidate delay offsets leave the window")
    n, kc = scenario.n_samples, len(offsets)
    m = scenario.m_osf
    x0 = np.zeros((n, kc), dtype=complex)
    v0 = np.zeros((n, kc))
    mask = np.zeros((n, kc), dtype=bool)
    for k in range(kc):
        d = int(offsets[k])
        pos = frame_support(d, scenario.n_frame, m)
        x0[pos[: scenario.n_pre], k] = pool.sequences[preamble_idx[k]]
        if data_prior == "gaussian":
            # The data span is free at the full sample rate, not just at
            # symbol positions: with fractional true delays the received
            # payload carries energy between symbol slots, and these extra
            # coefficients let the fit absorb the sub-sample misalignment.
            span = np.arange(d + scenario.n_pre * m, d + scenario.n_frame * m)
            mask[span, k] = True
            v0[span, k] = 1.0
    return x0, v0, mask


def frame_stats(state: PosteriorState, scenario: SimScenario):
    """Per-candidate symbol means/variances, shape (Kc, N_F)."""
    kc = len(state.offsets)
    idx = state.offsets[:, None] + scenario.m_osf * np.arange(scenario.n_frame)
    cols = np.arange(kc)[:, None]
    return state.x_hat[idx, cols], state.v_x[idx, cols]


def frame_span_stats(state: PosteriorState, scenario: SimScenario):
    """Per-candidate means/variances over the whole frame span.

    Shape (Kc, N_F * M_OSF): every sample between frame start and frame
    end, so the free data coefficients between symbol slots are included.
    """
    kc = len(state.offsets)
    idx = state.offsets[:, None] + np.arange(scenario.n_frame * scenario.m_osf)
    cols = np.arange(kc)[:, None]
    return state.x_hat[idx, cols], state.v_x[idx, cols]


def data_symbols(state: PosteriorState, scenario: SimScenario) -> np.ndarray:
    """Posterior means at the payload symbol slots, shape (Kc, N_D).

    The symbol-spaced samples of the fitted coefficients are read out
    directly: the free span acts as a deconvolved version of the payload
    waveform, so its symbol-slot samples estimate the symbols themselves
    while the off-slot coefficients only serve to absorb sub-sample delay
    misalignment and are dropped here.
    """
    mean, _ = frame_stats(state, scenario)
    return mean[:, scenario.n_pre :]


def eta_floor(scenario: SimScenario) -> float:
    """Smallest channel energy worth calling a user.

    One percent of the expected active-user row energy: far above any
    noise-born fit, far below a genuinely received row, so it only rejects
    candidates whose fit collapsed (misplaced or collided).
    """
    return 0.01 * scenario.chan_var * scenario.n_rx


def resolve_eta(config: JucedConfig, scenario: SimScenario) -> float:
    """Activity threshold: calibrated value, or the energy-floor default."""
    if config.eta_th is not None:
        return config.eta_th
    return eta_floor(scenario)


def _empty_state(n, n_rx, scenario) -> PosteriorState:
    zi = np.empty(0, dtype=int)
    zc = lambda *s: np.zeros(s, dtype=complex)  # noqa: E731
    zr = lambda *s: np.zeros(s)  # noqa: E731
    return PosteriorState(
        offsets=zi, preamble_idx=zi.copy(),
        x_hat=zc(n, 0), v_x=zr(n, 0), g_hat=zc(0, n_rx), v_g=zr(0, n_rx),
        b_hat=zc(n, 0), v_b=zr(n, 0),
        p_hat=zc(n, n_rx), v_p=zr(n, n_rx), a_hat=zc(n, n_rx), v_a=zr(n, n_rx),
        beta_hat=zc(n, n_rx), v_beta=zr(n, n_rx),
        q_hat=zc(0, n_rx), v_q=zr(0, n_rx), r_hat=zc(n, 0), v_r=zr(n, 0),
        o_hat=zc(n, 0), v_o=zr(n, 0), gamma_hat=zc(n, 0), v_gamma=zr(n, 0),
        m_hat=zc(n, 0), v_m=zr(n, 0), data_mask=np.zeros((n, 0), dtype=bool),
        activity_posterior=zr(0), activity_stat=zr(0),
        alpha_hat=np.zeros(0, dtype=bool),
        iterations=0, converged=True, diverged=False,
        residual_trace=np.empty(0),
    )


def run_juced(
    Y_white: np.ndarray,
    Z_white: np.ndarray,
    delays,
    pool: PreamblePool,
    config: JucedConfig,
    scenario: SimScenario,
) -> PosteriorState:
    """Run the inner loop for one candidate set.

    ``delays`` needs ``offsets`` and ``preamble_idx`` arrays (sample-grid
    delays and pool rows).  Damping blends fresh means/variances into the
    iterate; a residual increase tightens the blend, and a blow-up beyond
    ``explosion_bound`` returns the last stable iterate flagged diverged.
    """
    n, n_rx = Y_white.shape
    offsets = np.asarray(delays.offsets, dtype=int)
    preamble_idx = np.asarray(delays.preamble_idx, dtype=int)
    kc = len(offsets)
    if kc == 0:
        return _empty_state(n, n_rx, scenario)

    floor = config.variance_floor
    sigma_w2 = scenario.sigma_w2
    x0, vx0, data_mask = build_symbol_prior(
        offsets, preamble_idx, pool, scenario, config.data_prior
    )
    rng = np.random.default_rng(config.init_seed)
    g_scale = np.sqrt(scenario.rho * scenario.chan_var / 100.0 / 2.0)
    g = g_scale * (rng.standard_normal((kc, n_rx))
                   + 1j * rng.standard_normal((kc, n_rx)))
    v_g = np.full((kc, n_rx), scenario.rho * scenario.chan_var)
    x, v_x = x0.copy(), vx0.copy()
    Zw_sq = Z_white ** 2
    b = Z_white @ x
    v_b = Zw_sq @ v_x
    beta = np.zeros((n, n_rx), dtype=complex)
    gamma = np.zeros((n, kc), dtype=complex)
    pi = np.full(kc, scenario.rho)

    step = config.damping
    prev_resid = np.inf
    resids = []
    caches = {}
    converged = diverged = False
    it = 0
    snapshot = (x, v_x, g, v_g, b, v_b, pi)
    best_resid = np.inf
    best = None

    for it in range(1, config.max_iter + 1):
        snapshot = (x, v_x, g, v_g, b, v_b, pi)
        p, v_p = forward_output_message(b, v_b, g, v_g, beta, floor)
        a, v_a = output_denoiser(p, v_p, Y_white, sigma_w2)
        beta_new, v_beta = scaled_residual(Y_white, p, v_p, sigma_w2)
        q, v_q = channel_message(b, v_b, beta_new, v_beta, g, floor)
        g_new, vg_new, pi_new = channel_denoiser(
            q, v_q, scenario.rho, scenario.chan_var, floor
        )
        r, v_r = bilinear_input_message(b, beta_new, v_beta, g, v_g, floor)
        o, v_o = linear_forward_message(Z_white, Zw_sq, x, v_x, gamma, floor)
        b_new, vb_new = b_denoiser(r, v_r, o, v_o)
        gamma_new, v_gamma = b_residual(r, o, v_r, v_o)
        m, v_m = symbol_message(Z_white, Zw_sq, x, gamma_new, v_gamma, floor)
        x_new, vx_new = symbol_denoiser(m, v_m, x0, data_mask)

        keep = 1.0 - step
        x = step * x_new + keep * x
        v_x = step * vx_new + keep * v_x
        g_prev_vg = v_g
        g = step * g_new + keep * g
        v_g = step * vg_new + keep * v_g
        b = step * b_new + keep * b
        v_b = step * vb_new + keep * v_b
        beta, gamma, pi = beta_new, gamma_new, pi_new
        caches = dict(
            p_hat=p, v_p=v_p, a_hat=a, v_a=v_a, beta_hat=beta, v_beta=v_beta,
            q_hat=q, v_q=v_q, r_hat=r, v_r=v_r, o_hat=o, v_o=v_o,
            gamma_hat=gamma, v_gamma=v_gamma, m_hat=m, v_m=v_m,
        )

        peak = max(
            np.abs(x).max(initial=0.0), np.abs(g).max(initial=0.0),
            np.abs(b).max(initial=0.0), v_x.max(initial=0.0),
            v_g.max(initial=0.0), v_b.max(initial=0.0),
        )
        if not np.isfinite(peak) or peak > config.explosion_bound:
            x, v_x, g, v_g, b, v_b, pi = snapshot
            diverged = True
            break

        resid = np.linalg.norm(Y_white - (Z_white @ x) @ g)
        resids.append(resid)
        if resid < best_resid:
            best_resid = resid
            best = (x, v_x, g, v_g, b, v_b, pi, caches)
        if resid > prev_resid:
            step = max(0.05, 0.75 * step)  # residual grew: damp harder
        prev_resid = resid

        if np.abs(v_g - g_prev_vg).sum() < config.eps_conv:
            converged = True
            break

    # Late iterations can drift away from the best fit without tripping
    # the explosion bound; hand back the lowest-residual iterate instead.
    if best is not None and (diverged or
                             (resids and resids[-1] > 1.05 * best_resid)):
        x, v_x, g, v_g, b, v_b, pi, caches = best

    stat = (np.abs(g) ** 2).sum(axis=1)
    alpha = stat > resolve_eta(config, scenario)
    if not caches:  # diverged on the very first iteration
        zc = np.zeros((n, n_rx), dtype=complex)
        zr = np.zeros((n, n_rx))
        zk = np.zeros((n, kc), dtype=complex)
        zkr = np.zeros((n, kc))
        caches = dict(
            p_hat=zc, v_p=zr, a_hat=zc.copy(), v_a=zr.copy(),
            beta_hat=zc.copy(), v_beta=zr.copy(),
            q_hat=np.zeros((kc, n_rx), dtype=complex),
            v_q=np.zeros((kc, n_rx)),
            r_hat=zk, v_r=zkr, o_hat=zk.copy(), v_o=zkr.copy(),
            gamma_hat=zk.copy(), v_gamma=zkr.copy(),
            m_hat=zk.copy(), v_m=zkr.copy(),
        )
    return PosteriorState(
        offsets=offsets, preamble_idx=preamble_idx,
        x_hat=x, v_x=v_x, g_hat=g, v_g=v_g, b_hat=b, v_b=v_b,
        data_mask=data_mask,
        activity_posterior=pi, activity_stat=stat, alpha_hat=alpha,
        iterations=it, converged=converged, diverged=diverged,
        residual_trace=np.array(resids),
        **caches,
    )
