import math

import numpy as np
import pytest

from dualbbgky import (OneParticleDensity, QuadratureSpec, apply_S,
                       apply_S_hat, backward_flow_operator, check_symmetry,
                       gaussian_initial_data, l1_norm, product_density,
                       scattering_operator, scattering_operator_composed)
from dualbbgky.errors import ArityMismatchError
from dualbbgky.operators import PhaseFunction

from conftest import gaussian_bump, harmonic_two_body, position_bump


def test_identity_at_t0(harmonic_ctx):
    f = gaussian_bump(2)
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(2, 6))
    assert apply_S(harmonic_ctx, 0.0, f, pts) == f(pts)
    assert apply_S_hat(harmonic_ctx, 0.0, f, pts) == f(pts)


def test_backward_free_flow_example(free_ctx):
    f = PhaseFunction(1, lambda pts: np.exp(-(pts[:, 0, 3:] ** 2).sum(axis=1)))
    point = np.array([[1.0, 0, 0, 1.0, 0, 0]])
    # backward free flow moves r to r - t v = origin
    assert apply_S(free_ctx, 1.0, f, point) == pytest.approx(1.0, abs=1e-12)


def test_backward_flow_matches_analytic_pullback(harmonic_ctx):
    f = gaussian_bump(2)
    rng = np.random.default_rng(1)
    pts = rng.normal(size=(2, 6))
    t = 0.4
    val = apply_S(harmonic_ctx, t, f, pts)
    ref = f(harmonic_two_body(1.0, -t, pts))
    assert val == pytest.approx(ref, abs=1e-6)


def test_scattering_identity_arity_one(harmonic_ctx):
    f = gaussian_bump(1)
    pts = np.array([[0.4, -0.2, 0.1, 0.3, 0.0, -0.5]])
    assert apply_S_hat(harmonic_ctx, 0.7, f, pts) == f(pts)


def test_scattering_free_collapse(free_ctx):
    f = gaussian_bump(3)
    rng = np.random.default_rng(2)
    pts = rng.normal(size=(3, 6))
    for t in (0.1, 1.0):
        assert abs(apply_S_hat(free_ctx, t, f, pts) - f(pts)) < 1e-12


def test_scattering_two_routes_agree(harmonic_ctx):
    f = gaussian_bump(3)
    rng = np.random.default_rng(3)
    for _ in range(5):
        pts = rng.normal(size=(3, 6))
        t = rng.uniform(0.05, 0.3)
        direct = scattering_operator(harmonic_ctx, t, f)(pts)
        composed = scattering_operator_composed(harmonic_ctx, t, f)(pts)
        assert direct == pytest.approx(composed, abs=1e-12)


def test_scattering_second_order_for_position_bump(harmonic_ctx):
    # for a position-only function the interaction bracket vanishes, so the
    # scattering correction is second order in t
    f = position_bump(2)
    rng = np.random.default_rng(4)
    pts = rng.normal(size=(2, 6)) * 0.7
    devs = []
    for t in (0.02, 0.01):
        devs.append(abs(apply_S_hat(harmonic_ctx, t, f, pts) - f(pts)))
    slope = math.log2(devs[0] / devs[1])
    assert 1.8 < slope < 2.2


def test_composition(harmonic_ctx):
    f = gaussian_bump(2)
    rng = np.random.default_rng(5)
    pts = rng.normal(size=(2, 6))
    g = backward_flow_operator(harmonic_ctx, 0.1,
                               backward_flow_operator(harmonic_ctx, 0.15, f))
    direct = backward_flow_operator(harmonic_ctx, 0.25, f)
    assert g(pts) == pytest.approx(direct(pts), abs=1e-6)


def test_isometry_within_mc_errors(harmonic_ctx):
    d = gaussian_initial_data(1.0, 1.0, 1.0, 0.2, 128, seed=11)
    f = product_density(d, 2)
    pulled = backward_flow_operator(harmonic_ctx, 0.2, f)
    q = QuadratureSpec(10_000, proposal=d, seed=21, error_mode="fixed-budget")
    rep = l1_norm(pulled, q)
    assert abs(rep.value - 1.0) <= 3.0 * rep.std_error


def test_arity_mismatch():
    f = gaussian_bump(2)
    with pytest.raises(ArityMismatchError):
        f(np.zeros((3, 6)))
    with pytest.raises(ArityMismatchError):
        f.evaluate_batch(np.zeros((4, 3, 6)))


def test_symmetry_checker():
    d = gaussian_initial_data(1.0, 1.0, 1.0, 0.2, 64, seed=12)
    f = product_density(d, 3)
    rng = np.random.default_rng(13)
    assert check_symmetry(f, rng) < 1e-12
