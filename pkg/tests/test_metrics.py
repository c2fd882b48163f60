"""Candidate-to-user matching and per-trial scores on hand-built fixtures."""

import math

import numpy as np
import pytest

from asyncmtc.config import SimScenario
from asyncmtc.em import ReceiverOutput
from asyncmtc.metrics import compute_metrics, match_candidates
from asyncmtc.signal_model import UserRealization


def _scenario():
    return SimScenario(
        n_users=3, rho=0.5, n_rx=2, n_pre=3, n_data=2, n_win=12,
        m_osf=2, sigma_w2=0.1, pool_size=2,
    )


def _realization(sc, alpha, tau, preambles, seed=0):
    rng = np.random.default_rng(seed)
    return UserRealization(
        alpha=np.asarray(alpha, dtype=bool),
        tau=np.asarray(tau, dtype=float),
        H=rng.standard_normal((sc.n_users, sc.n_rx))
        + 1j * rng.standard_normal((sc.n_users, sc.n_rx)),
        preamble_idx=np.asarray(preambles, dtype=int),
        data=rng.standard_normal((sc.n_users, sc.n_data))
        + 1j * rng.standard_normal((sc.n_users, sc.n_data)),
    )


def _output(sc, offsets, preambles, activity, g_hat, x_hat):
    k = len(offsets)
    return ReceiverOutput(
        offsets=np.asarray(offsets, dtype=int),
        preamble_idx=np.asarray(preambles, dtype=int),
        activity=np.asarray(activity, dtype=bool),
        g_hat=np.asarray(g_hat, dtype=complex).reshape(k, sc.n_rx),
        x_data_hat=np.asarray(x_hat, dtype=complex).reshape(k, sc.n_data),
    )


def test_exact_output_scores_perfectly():
    sc = _scenario()
    real = _realization(sc, [True, True, False], [1.0, 3.5, 0.0], [0, 1, 0])
    out = _output(
        sc, offsets=[2, 7], preambles=[0, 1], activity=[True, True],
        g_hat=real.H[:2], x_hat=real.data[:2],
    )
    m = compute_metrics(real, out, sc)
    assert m.nmse_g == 0.0
    assert m.nmse_x == 0.0
    assert m.p_md == 0.0
    assert m.p_fa == 0.0
    assert m.delay_rmse == 0.0
    assert m.n_matched == 2
    assert m.n_false == 0


def test_silent_receiver_scores_unit_nmse():
    sc = _scenario()
    real = _realization(sc, [True, True, False], [1.0, 3.5, 0.0], [0, 1, 0])
    out = _output(sc, [], [], [], np.zeros((0, sc.n_rx)),
                  np.zeros((0, sc.n_data)))
    m = compute_metrics(real, out, sc)
    assert m.nmse_g == pytest.approx(1.0, rel=1e-12)
    assert m.nmse_x == pytest.approx(1.0, rel=1e-12)
    assert m.p_md == 1.0
    assert m.p_fa == 0.0
    assert math.isnan(m.delay_rmse)
    assert m.n_matched == 0


def test_inactive_candidate_rows_are_ignored():
    sc = _scenario()
    real = _realization(sc, [True, False, False], [1.0, 0.0, 0.0], [0, 0, 0])
    out = _output(
        sc, offsets=[2, 2], preambles=[0, 0], activity=[False, True],
        g_hat=np.stack([np.zeros(sc.n_rx), real.H[0]]),
        x_hat=np.stack([np.zeros(sc.n_data), real.data[0]]),
    )
    m = compute_metrics(real, out, sc)
    assert m.n_matched == 1
    assert m.n_false == 0
    assert m.nmse_g == 0.0


def test_extra_detection_counts_one_false_alarm():
    sc = _scenario()
    real = _realization(sc, [True, False, False], [2.0, 0.0, 0.0], [0, 0, 0])
    out = _output(
        sc, offsets=[4, 11], preambles=[0, 1], activity=[True, True],
        g_hat=np.stack([real.H[0], np.ones(sc.n_rx)]),
        x_hat=np.stack([real.data[0], np.ones(sc.n_data)]),
    )
    m = compute_metrics(real, out, sc)
    assert m.n_matched == 1
    assert m.n_false == 1
    assert m.p_fa == pytest.approx(1.0 / 2.0)  # two inactive users
    assert m.p_md == 0.0


def test_delay_tolerance_is_one_symbol_period():
    sc = _scenario()  # tolerance = m_osf = 2 samples
    real = _realization(sc, [True, False, False], [2.0, 0.0, 0.0], [0, 0, 0])

    hit = _output(sc, [6], [0], [True], real.H[:1], real.data[:1])
    m_hit = compute_metrics(real, hit, sc)
    assert m_hit.n_matched == 1  # error exactly at the tolerance
    assert m_hit.delay_rmse == pytest.approx(2.0)

    miss = _output(sc, [7], [0], [True], real.H[:1], real.data[:1])
    m_miss = compute_metrics(real, miss, sc)
    assert m_miss.n_matched == 0
    assert m_miss.p_md == 1.0
    assert m_miss.n_false == 1


def test_matching_requires_the_same_preamble():
    sc = _scenario()
    real = _realization(sc, [True, False, False], [2.0, 0.0, 0.0], [0, 0, 0])
    out = _output(sc, [4], [1], [True], real.H[:1], real.data[:1])
    m = compute_metrics(real, out, sc)
    assert m.n_matched == 0
    assert m.p_md == 1.0
    assert m.n_false == 1


def test_greedy_matching_pairs_nearest_first():
    sc = _scenario()
    # two same-preamble users; candidate 0 sits between them, nearer user 1
    real = _realization(sc, [True, True, False], [1.0, 2.0, 0.0], [0, 0, 0])
    out = _output(
        sc, offsets=[3, 2], preambles=[0, 0], activity=[True, True],
        g_hat=np.stack([real.H[1], real.H[0]]),
        x_hat=np.stack([real.data[1], real.data[0]]),
    )
    pairs, false_alarms, missed = match_candidates(real, out, sc)
    by_cand = {c: u for c, u, _ in pairs}
    assert by_cand == {2 - 2: 1, 1: 0}  # cand 0 -> user 1, cand 1 -> user 0
    assert not false_alarms and not missed
    m = compute_metrics(real, out, sc)
    assert m.nmse_g == 0.0 and m.nmse_x == 0.0


def test_missed_energy_fills_the_numerator():
    sc = _scenario()
    real = _realization(sc, [True, True, False], [1.0, 4.0, 0.0], [0, 1, 0])
    # perfect on user 0, blind to user 1
    out = _output(sc, [2], [0], [True], real.H[:1], real.data[:1])
    m = compute_metrics(real, out, sc)
    g_expect = (np.abs(real.H[1]) ** 2).sum() / (
        np.abs(real.H[:2]) ** 2
    ).sum()
    x_expect = (np.abs(real.data[1]) ** 2).sum() / (
        np.abs(real.data[:2]) ** 2
    ).sum()
    assert m.nmse_g == pytest.approx(g_expect, rel=1e-12)
    assert m.nmse_x == pytest.approx(x_expect, rel=1e-12)
    assert m.p_md == pytest.approx(0.5)


def test_quiet_window_with_no_activity_scores_zero():
    sc = _scenario()
    real = _realization(sc, [False, False, False], [0.0, 0.0, 0.0], [0, 0, 0])
    out = _output(sc, [], [], [], np.zeros((0, sc.n_rx)),
                  np.zeros((0, sc.n_data)))
    m = compute_metrics(real, out, sc)
    assert m.nmse_g == 0.0
    assert m.nmse_x == 0.0
    assert m.p_md == 0.0
    assert m.p_fa == 0.0
