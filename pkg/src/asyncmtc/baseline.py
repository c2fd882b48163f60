"""Baseline receiver: preamble-only estimation, then least-squares data.

This is the UAD-DC-like reference chain: activity, channel, and delay are
estimated from the preamble alone (data slots treated as zero during
inference, so their energy is unmodeled interference), and the payload is
recovered afterwards by least squares against the estimated channel.  Its
channel estimates saturate at high SNR because the assumed noise level
never accounts for the data interference.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .config import EmConfig, JucedConfig, SimScenario
from .em import DelayEstimate, EmResult, ReceiverOutput, run_em
from .preamble import PreamblePool
from .pulse import PulseBank
from .signal_model import frame_support
from .whitening import prewhiten


def ls_data_detect(
    Y_white: np.ndarray,
    Z_white: np.ndarray,
    delays: DelayEstimate,
    g_hat: np.ndarray,
    pool: PreamblePool,
    scenario: SimScenario,
):
    """Least-squares payload estimate for the active candidates.

    The known preamble contribution of the active set is subtracted, then
    the stacked linear system over (candidate, data slot) unknowns is
    solved through its normal equations.  Returns (x_data, rank_deficient);
    rows of inactive candidates are zero.  On a singular system the
    minimum-norm solution is returned and the flag is set.
    """
    kc = len(delays.offsets)
    x_data = np.zeros((kc, scenario.n_data), dtype=complex)
    act = np.flatnonzero(delays.active_mask)
    if act.size == 0:
        return x_data, False
    n_d, n_p, m = scenario.n_data, scenario.n_pre, scenario.m_osf
    g_act = g_hat[act]

    Xp = np.zeros((scenario.n_samples, act.size), dtype=complex)
    data_cols = []
    for j, k in enumerate(act):
        pos = frame_support(int(delays.offsets[k]), scenario.n_frame, m)
        Xp[pos[:n_p], j] = pool.sequences[delays.preamble_idx[k]]
        data_cols.append(pos[n_p:])
    R = Y_white - (Z_white @ Xp) @ g_act

    pos_flat = np.concatenate(data_cols)
    Zp = Z_white[:, pos_flat]                      # (N, nA*N_D), real
    gram_z = Zp.T @ Zp
    q = g_act.conj() @ g_act.T                     # antenna inner products
    aha = gram_z * np.kron(q, np.ones((n_d, n_d)))
    t1 = R @ g_act.conj().T                        # (N, nA)
    rhs_mat = Zp.T @ t1
    rhs = rhs_mat[np.arange(act.size * n_d), np.repeat(np.arange(act.size), n_d)]

    deficient = act.size * n_d > Y_white.size
    try:
        sol = cho_solve(cho_factor(aha, lower=True), rhs)
    except np.linalg.LinAlgError:
        sol = np.linalg.pinv(aha, hermitian=True) @ rhs
        deficient = True
    x_data[act] = sol.reshape(act.size, n_d)
    return x_data, deficient


def uad_dc_baseline(
    Y: np.ndarray,
    pulse: PulseBank,
    pool: PreamblePool,
    scenario: SimScenario,
    juced_cfg: JucedConfig,
    em_cfg: EmConfig,
    peak_threshold: float,
) -> ReceiverOutput:
    """Run the preamble-only chain end to end on one window."""
    cfg = replace(juced_cfg, data_prior="pinned_zero")
    result: EmResult = run_em(Y, pulse, pool, scenario, cfg, em_cfg, peak_threshold)
    out = ReceiverOutput.from_em_result(result, scenario)
    Y_white, Z_white, _ = prewhiten(Y, pulse)
    x_data, deficient = ls_data_detect(
        Y_white, Z_white, result.delays, result.posterior.g_hat, pool, scenario
    )
    out.x_data_hat = x_data
    out.rank_deficient = deficient
    return out
