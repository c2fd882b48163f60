"""Shared fixtures: small scenarios and their pulse banks / preamble pools."""

import numpy as np
import pytest

from asyncmtc.config import SimScenario
from asyncmtc.preamble import build_zc_pool
from asyncmtc.pulse import PulseBank


@pytest.fixture(scope="session")
def tiny_scenario():
    """Eight-sample window, two users: sized for scalar-oracle comparisons."""
    return SimScenario(
        n_users=2, rho=0.25, n_rx=2, n_pre=3, n_data=2, n_win=8,
        m_osf=1, sigma_w2=0.1, chan_var=1.0, rolloff=0.5, pool_size=2,
    )


@pytest.fixture(scope="session")
def tiny_pulse(tiny_scenario):
    return PulseBank.for_scenario(tiny_scenario)


@pytest.fixture(scope="session")
def tiny_pool(tiny_scenario):
    return build_zc_pool(tiny_scenario.n_pre, tiny_scenario.pool_size)


@pytest.fixture(scope="session")
def small_scenario():
    """Single always-active user at moderate size for inner-loop runs."""
    return SimScenario(
        n_users=1, rho=1.0, n_rx=8, n_pre=8, n_data=8, n_win=24,
        m_osf=2, sigma_w2=1e-3, chan_var=1.0, rolloff=0.5, pool_size=2,
    )


@pytest.fixture(scope="session")
def small_pulse(small_scenario):
    return PulseBank.for_scenario(small_scenario)


@pytest.fixture(scope="session")
def small_pool(small_scenario):
    return build_zc_pool(small_scenario.n_pre, small_scenario.pool_size)


def random_message_instance(seed, n=8, kc=2, n_rx=2):
    """Random positive-variance message-plane arrays for oracle checks."""
    rng = np.random.default_rng(seed)

    def cplx(*shape):
        return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)

    def var(*shape):
        return rng.uniform(0.05, 2.0, size=shape)

    return dict(
        b=cplx(n, kc), v_b=var(n, kc),
        g=cplx(kc, n_rx), v_g=var(kc, n_rx),
        x=cplx(n, kc), v_x=var(n, kc),
        y=cplx(n, n_rx),
        beta=cplx(n, n_rx), v_beta=var(n, n_rx),
        gamma=cplx(n, kc), v_gamma=var(n, kc),
        beta_prev=cplx(n, n_rx), gamma_prev=cplx(n, kc),
        sigma_w2=float(rng.uniform(0.05, 1.0)),
    )


def rel_err(lib, oracle):
    """Frobenius-relative deviation between a library and an oracle array."""
    scale = max(float(np.linalg.norm(oracle)), 1e-300)
    return float(np.linalg.norm(np.asarray(lib) - np.asarray(oracle))) / scale
