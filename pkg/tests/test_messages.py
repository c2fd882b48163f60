"""Message-passing kernels against unvectorized scalar transcriptions.

Each kernel is compared to an independent per-entry loop (tests/oracles.py)
on random inputs, then exercised on degenerate inputs where the expected
output is known in closed form.
"""

import numpy as np
import pytest

import oracles
from asyncmtc.juced import (
    b_denoiser,
    b_residual,
    bilinear_input_message,
    channel_message,
    forward_output_message,
    linear_forward_message,
    scaled_residual,
    symbol_message,
)
from conftest import random_message_instance, rel_err

SEEDS = [0, 1, 2]


def _random_operator(seed, n):
    return np.random.default_rng(seed + 900).standard_normal((n, n))


@pytest.mark.parametrize("seed", SEEDS)
def test_forward_output_message_matches_transcription(seed):
    d = random_message_instance(seed)
    p, v_p = forward_output_message(d["b"], d["v_b"], d["g"], d["v_g"], d["beta_prev"])
    p_o, v_o = oracles.forward_output_message(
        d["b"], d["v_b"], d["g"], d["v_g"], d["beta_prev"]
    )
    assert rel_err(p, p_o) < 1e-12
    assert rel_err(v_p, v_o) < 1e-12


@pytest.mark.parametrize("seed", SEEDS)
def test_scaled_residual_matches_posterior_identity(seed):
    d = random_message_instance(seed)
    _, v_p = forward_output_message(d["b"], d["v_b"], d["g"], d["v_g"], d["beta_prev"])
    p = d["beta_prev"]  # any finite mean works as the plugin estimate
    beta, v_beta = scaled_residual(d["y"], p, v_p, d["sigma_w2"])
    beta_o, v_beta_o = oracles.output_residual(d["y"], p, v_p, d["sigma_w2"])
    assert rel_err(beta, beta_o) < 1e-12
    assert rel_err(v_beta, v_beta_o) < 1e-12


@pytest.mark.parametrize("seed", SEEDS)
def test_channel_message_matches_transcription(seed):
    d = random_message_instance(seed)
    q, v_q = channel_message(d["b"], d["v_b"], d["beta"], d["v_beta"], d["g"])
    q_o, v_q_o = oracles.channel_message(
        d["b"], d["v_b"], d["beta"], d["v_beta"], d["g"]
    )
    assert rel_err(q, q_o) < 1e-12
    assert rel_err(v_q, v_q_o) < 1e-12


@pytest.mark.parametrize("seed", SEEDS)
def test_bilinear_input_message_matches_transcription(seed):
    d = random_message_instance(seed)
    r, v_r = bilinear_input_message(d["b"], d["beta"], d["v_beta"], d["g"], d["v_g"])
    r_o, v_r_o = oracles.bilinear_input_message(
        d["b"], d["beta"], d["v_beta"], d["g"], d["v_g"]
    )
    assert rel_err(r, r_o) < 1e-12
    assert rel_err(v_r, v_r_o) < 1e-12


@pytest.mark.parametrize("seed", SEEDS)
def test_linear_forward_message_matches_transcription(seed):
    d = random_message_instance(seed)
    Z = _random_operator(seed, d["x"].shape[0])
    o, v_o = linear_forward_message(Z, Z**2, d["x"], d["v_x"], d["gamma_prev"])
    o_o, v_o_o = oracles.linear_forward_message(Z, d["x"], d["v_x"], d["gamma_prev"])
    assert rel_err(o, o_o) < 1e-12
    assert rel_err(v_o, v_o_o) < 1e-12


@pytest.mark.parametrize("seed", SEEDS)
def test_symbol_message_matches_transcription(seed):
    d = random_message_instance(seed)
    Z = _random_operator(seed, d["x"].shape[0])
    m, v_m = symbol_message(Z, Z**2, d["x"], d["gamma"], d["v_gamma"])
    m_o, v_m_o = oracles.symbol_message(Z, d["x"], d["gamma"], d["v_gamma"])
    assert rel_err(m, m_o) < 1e-12
    assert rel_err(v_m, v_m_o) < 1e-12


@pytest.mark.parametrize("seed", SEEDS)
def test_b_residual_matches_posterior_identity(seed):
    d = random_message_instance(seed)
    r, o = d["gamma"], d["gamma_prev"]
    v_r, v_o = d["v_gamma"], d["v_x"]
    gamma, v_gamma = b_residual(r, o, v_r, v_o)
    gamma_o, v_gamma_o = oracles.input_residual(r, v_r, o, v_o)
    assert rel_err(gamma, gamma_o) < 1e-12
    assert rel_err(v_gamma, v_gamma_o) < 1e-12


@pytest.mark.parametrize("seed", SEEDS)
def test_b_denoiser_is_a_precision_weighted_pair(seed):
    d = random_message_instance(seed)
    r, o = d["gamma"], d["gamma_prev"]
    v_r, v_o = d["v_gamma"], d["v_x"]
    b, v_b = b_denoiser(r, v_r, o, v_o)
    for idx in np.ndindex(r.shape):
        mean, var = oracles.gaussian_pair_product(
            r[idx], v_r[idx], o[idx], v_o[idx]
        )
        assert abs(b[idx] - mean) < 1e-12 * max(1.0, abs(mean))
        assert abs(v_b[idx] - var) < 1e-12


# --- degenerate inputs --------------------------------------------------------


def test_zero_onsager_term_recovers_plugin_product():
    d = random_message_instance(7)
    p, _ = forward_output_message(
        d["b"], d["v_b"], d["g"], d["v_g"], np.zeros_like(d["beta_prev"])
    )
    assert np.allclose(p, d["b"] @ d["g"], atol=1e-12)


def test_certain_factors_floor_the_output_variance():
    d = random_message_instance(8)
    zb, zg = np.zeros_like(d["v_b"]), np.zeros_like(d["v_g"])
    p, v_p = forward_output_message(d["b"], zb, d["g"], zg, d["beta_prev"])
    assert np.allclose(p, d["b"] @ d["g"], atol=1e-12)  # Onsager term vanishes
    assert np.all(v_p == 1e-12)


def test_channel_message_without_symbol_support_degenerates_to_prior():
    d = random_message_instance(9)
    zero_b = np.zeros_like(d["b"])
    q, v_q = channel_message(zero_b, np.zeros_like(d["v_b"]),
                             d["beta"], d["v_beta"], d["g"])
    assert np.allclose(q, d["g"], atol=1e-12)
    assert np.all(v_q == 1e12)  # 1/floor sentinel: carries no information


def test_bilinear_message_without_channel_support_degenerates_to_symbols():
    d = random_message_instance(10)
    zero_g = np.zeros_like(d["g"])
    r, v_r = bilinear_input_message(d["b"], d["beta"], d["v_beta"],
                                    zero_g, np.zeros_like(d["v_g"]))
    assert np.allclose(r, d["b"], atol=1e-12)
    assert np.all(v_r == 1e12)


def test_linear_message_zero_onsager_is_the_plain_product():
    d = random_message_instance(11)
    Z = _random_operator(11, d["x"].shape[0])
    o, v_o = linear_forward_message(
        Z, Z**2, d["x"], d["v_x"], np.zeros_like(d["gamma_prev"])
    )
    assert np.allclose(o, Z @ d["x"], atol=1e-12)
    assert np.allclose(v_o, Z**2 @ d["v_x"], atol=1e-12)


def test_symbol_message_with_identity_operator():
    d = random_message_instance(12)
    eye = np.eye(d["x"].shape[0])
    m, v_m = symbol_message(eye, eye, d["x"], d["gamma"], d["v_gamma"])
    assert np.allclose(v_m, 1.0 / d["v_gamma"], atol=1e-12)
    assert np.allclose(m, d["x"] + d["gamma"] / d["v_gamma"], atol=1e-12)


def test_zero_residual_leaves_symbol_estimate_unchanged():
    d = random_message_instance(13)
    Z = _random_operator(13, d["x"].shape[0])
    m, _ = symbol_message(Z, Z**2, d["x"], np.zeros_like(d["gamma"]), d["v_gamma"])
    assert np.allclose(m, d["x"], atol=1e-12)


@pytest.mark.parametrize("seed", SEEDS)
def test_message_variances_stay_positive(seed):
    d = random_message_instance(seed + 50)
    Z = _random_operator(seed, d["x"].shape[0])
    _, v_p = forward_output_message(d["b"], d["v_b"], d["g"], d["v_g"], d["beta_prev"])
    _, v_beta = scaled_residual(d["y"], d["beta_prev"], v_p, d["sigma_w2"])
    _, v_q = channel_message(d["b"], d["v_b"], d["beta"], d["v_beta"], d["g"])
    _, v_r = bilinear_input_message(d["b"], d["beta"], d["v_beta"], d["g"], d["v_g"])
    _, v_o = linear_forward_message(Z, Z**2, d["x"], d["v_x"], d["gamma_prev"])
    _, v_m = symbol_message(Z, Z**2, d["x"], d["gamma"], d["v_gamma"])
    for v in (v_p, v_beta, v_q, v_r, v_o, v_m):
        assert np.all(v > 0.0)
