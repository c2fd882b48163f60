"""Per-trial scoring: candidate-to-user matching and error metrics.

Candidates only ever claim users that picked the same preamble.  Within a
preamble, detections are matched greedily to true active users by delay
distance; a match counts as a detection when the delay error is at most
M_OSF samples (one symbol period).  Misdetected users contribute their full
channel/payload energy to the NMSE numerators, so an all-zero receiver
scores NMSE 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import SimScenario
from .em import ReceiverOutput
from .signal_model import UserRealization


@dataclass
class TrialMetrics:
    """Scores of one receive window."""

    nmse_g: float
    nmse_x: float
    p_md: float
    p_fa: float
    delay_rmse: float      # samples, over matched detections; NaN if none
    n_matched: int
    n_false: int
    em_iterations: int = 0
    wall_time: float = 0.0


def match_candidates(
    realization: UserRealization, output: ReceiverOutput, scenario: SimScenario
):
    """Pair detected candidates with true active users, per preamble.

    Returns (pairs, false_alarm_idx, missed_users): ``pairs`` is a list of
    (candidate_row, user_idx, delay_err_samples) with error within the
    M_OSF-sample tolerance.
    """
    tol = float(scenario.m_osf)
    det_rows = np.flatnonzero(output.activity)
    active_users = np.flatnonzero(realization.alpha)
    pairs: list[tuple[int, int, float]] = []
    used_cand: set[int] = set()
    used_user: set[int] = set()
    for p in range(scenario.pool_size):
        cands = [c for c in det_rows if output.preamble_idx[c] == p]
        users = [u for u in active_users if realization.preamble_idx[u] == p]
        dists = []
        for c in cands:
            for u in users:
                err = abs(
                    output.offsets[c] - scenario.m_osf * realization.tau[u]
                )
                if err <= tol:
                    dists.append((err, c, u))
        dists.sort(key=lambda t: (t[0], t[1], t[2]))
        for err, c, u in dists:
            if c in used_cand or u in used_user:
                continue
            used_cand.add(c)
            used_user.add(u)
            pairs.append((c, u, float(err)))
    false_alarms = [c for c in det_rows if c not in used_cand]
    missed = [u for u in active_users if u not in used_user]
    return pairs, false_alarms, missed


def compute_metrics(
    realization: UserRealization,
    output: ReceiverOutput,
    scenario: SimScenario,
) -> TrialMetrics:
    """Score one window against the generating realization."""
    pairs, false_alarms, missed = match_candidates(realization, output, scenario)
    G = realization.G
    n_active = int(realization.alpha.sum())
    n_inactive = scenario.n_users - n_active

    g_num = x_num = 0.0
    for c, u, _ in pairs:
        g_num += float(np.sum(np.abs(output.g_hat[c] - G[u]) ** 2))
        x_num += float(np.sum(np.abs(output.x_data_hat[c] - realization.data[u]) ** 2))
    for u in missed:
        g_num += float(np.sum(np.abs(G[u]) ** 2))
        x_num += float(np.sum(np.abs(realization.data[u]) ** 2))
    g_den = float(np.sum(np.abs(G[realization.alpha]) ** 2))
    x_den = float(np.sum(np.abs(realization.data[realization.alpha]) ** 2))

    errs = np.array([e for _, _, e in pairs])
    return TrialMetrics(
        nmse_g=g_num / g_den if g_den > 0 else 0.0,
        nmse_x=x_num / x_den if x_den > 0 else 0.0,
        p_md=len(missed) / n_active if n_active else 0.0,
        p_fa=len(false_alarms) / n_inactive if n_inactive else 0.0,
        delay_rmse=float(np.sqrt(np.mean(errs ** 2))) if errs.size else float("nan"),
        n_matched=len(pairs),
        n_false=len(false_alarms),
        em_iterations=output.em_iterations,
    )
