import math

import numpy as np
import pytest

from dualbbgky import (FlowConfig, MacroPoint, PotentialSpec, flow_map,
                       flow_map_batch, force_on, hamiltonian_energy,
                       pair_potential, pair_potential_grad)
from dualbbgky.errors import ConfigError, StepBudgetError

from conftest import harmonic_two_body


def test_pair_potential_values():
    assert pair_potential(PotentialSpec("free"), [1, 0, 0]) == 0.0
    assert pair_potential(PotentialSpec("harmonic-pair", 1.0), [2, 0, 0]) == 2.0
    assert pair_potential(PotentialSpec("gaussian-pair", 1.0, 1.0), [0, 0, 0]) == 1.0


def test_pair_potential_symmetry():
    rng = np.random.default_rng(0)
    for spec in (PotentialSpec("harmonic-pair", 0.7),
                 PotentialSpec("gaussian-pair", 2.0, 0.5)):
        for _ in range(20):
            d = rng.normal(size=3)
            assert pair_potential(spec, d) == pytest.approx(
                pair_potential(spec, -d), rel=1e-14)


def test_potential_grad_matches_finite_difference():
    rng = np.random.default_rng(1)
    eps = 1e-6
    for spec in (PotentialSpec("harmonic-pair", 0.7),
                 PotentialSpec("gaussian-pair", 2.0, 0.8)):
        d = rng.normal(size=3)
        grad = pair_potential_grad(spec, d)
        for c in range(3):
            dp = d.copy(); dp[c] += eps
            dm = d.copy(); dm[c] -= eps
            fd = (pair_potential(spec, dp) - pair_potential(spec, dm)) / (2 * eps)
            assert grad[c] == pytest.approx(fd, abs=1e-8)


def test_potential_validation():
    with pytest.raises(ConfigError):
        PotentialSpec("lennard-jones")
    with pytest.raises(ConfigError):
        PotentialSpec("harmonic-pair", amplitude=-1.0)
    with pytest.raises(ConfigError):
        PotentialSpec("gaussian-pair", amplitude=1.0, range=0.0)


def test_force_free_and_harmonic():
    pts = [MacroPoint([0, 0, 0], [1, 0, 0]), MacroPoint([0, 0, 0], [0, 0, 0])]
    assert np.all(force_on(PotentialSpec("free"), pts, 0) == 0.0)
    f = force_on(PotentialSpec("harmonic-pair", 1.0), pts, 0)
    assert np.allclose(f, [-1, 0, 0], atol=1e-15)


def test_force_third_law_gaussian():
    rng = np.random.default_rng(2)
    spec = PotentialSpec("gaussian-pair", 1.5, 0.7)
    pts = rng.normal(size=(3, 6))
    total = sum(force_on(spec, pts, i) for i in range(3))
    assert np.linalg.norm(total) < 1e-12


def test_force_index_out_of_range():
    pts = np.zeros((2, 6))
    with pytest.raises(IndexError):
        force_on(PotentialSpec("free"), pts, 2)


def test_hamiltonian_values():
    assert hamiltonian_energy(PotentialSpec("free"),
                              [MacroPoint([2, 0, 0], [0, 0, 0])]) == 2.0
    pts = [MacroPoint([0, 0, 0], [1, 0, 0]), MacroPoint([0, 0, 0], [0, 0, 0])]
    assert hamiltonian_energy(PotentialSpec("harmonic-pair", 1.0), pts) == 0.5


def test_free_flow_exact():
    rng = np.random.default_rng(3)
    pts = rng.normal(size=(5, 3, 6))
    t = 1.7
    out = flow_map_batch(PotentialSpec("free"), FlowConfig(), t, pts)
    expect = pts.copy()
    expect[:, :, 3:] = pts[:, :, 3:] + t * pts[:, :, :3]
    assert np.array_equal(out, expect)


def test_two_body_harmonic_matches_analytic(harmonic_ctx):
    rng = np.random.default_rng(4)
    pts = rng.normal(size=(2, 6))
    for t in (0.3, 1.0, -0.6):
        num = flow_map_batch(harmonic_ctx.potential, harmonic_ctx.flow, t,
                             pts[None])[0]
        ana = harmonic_two_body(1.0, t, pts)
        assert np.abs(num - ana).max() < 1e-6


def test_harmonic_unit_frequency_sign_flip():
    # amplitude 0.5 gives relative-coordinate frequency 1; at t = pi the
    # relative coordinate returns sign flipped
    spec = PotentialSpec("harmonic-pair", 0.5)
    cfg = FlowConfig(step=1e-3, max_steps=10_000)
    rng = np.random.default_rng(5)
    pts = rng.normal(size=(2, 6))
    out = flow_map_batch(spec, cfg, math.pi, pts[None])[0]
    ana = harmonic_two_body(0.5, math.pi, pts)
    assert np.abs(out - ana).max() < 1e-5
    d0 = pts[0] - pts[1]
    dt = out[0] - out[1]
    assert np.abs(dt + d0).max() < 1e-5


@pytest.mark.parametrize("kind", ["harmonic-pair", "gaussian-pair"])
def test_reversibility(kind, flow_cfg):
    spec = PotentialSpec(kind, 1.0, 1.0)
    rng = np.random.default_rng(6)
    pts = rng.normal(size=(4, 3, 6))
    t = 0.25
    there = flow_map_batch(spec, flow_cfg, t, pts)
    back = flow_map_batch(spec, flow_cfg, -t, there)
    assert np.abs(back - pts).max() < 1e-8


@pytest.mark.parametrize("kind", ["harmonic-pair", "gaussian-pair"])
def test_energy_drift_1000_steps(kind):
    spec = PotentialSpec(kind, 1.0, 1.0)
    cfg = FlowConfig(step=1e-3)
    rng = np.random.default_rng(7)
    pts = rng.normal(size=(3, 6))
    e0 = hamiltonian_energy(spec, pts)
    out = flow_map_batch(spec, cfg, 1.0, pts[None])[0]  # 1000 steps
    e1 = hamiltonian_energy(spec, out)
    assert abs(e1 - e0) / max(abs(e0), 1.0) < 1e-6


def test_momentum_conservation(harmonic_ctx):
    rng = np.random.default_rng(8)
    pts = rng.normal(size=(4, 6))
    out = flow_map_batch(harmonic_ctx.potential, harmonic_ctx.flow, 0.2,
                         pts[None])[0]
    p0 = pts[:, :3].sum(axis=0)
    p1 = out[:, :3].sum(axis=0)
    assert np.abs(p1 - p0).max() < 1e-10 * 200


def test_permutation_equivariance(gaussian_ctx):
    rng = np.random.default_rng(9)
    pts = rng.normal(size=(4, 6))
    perm = np.array([2, 0, 3, 1])
    a = flow_map_batch(gaussian_ctx.potential, gaussian_ctx.flow, 0.3,
                       pts[None])[0][perm]
    b = flow_map_batch(gaussian_ctx.potential, gaussian_ctx.flow, 0.3,
                       pts[perm][None])[0]
    assert np.abs(a - b).max() < 1e-12


def test_step_budget():
    cfg = FlowConfig(step=1e-3, max_steps=10)
    spec = PotentialSpec("harmonic-pair", 1.0)
    with pytest.raises(StepBudgetError):
        flow_map_batch(spec, cfg, 1.0, np.zeros((1, 2, 6)))


def test_flow_map_list_interface(harmonic_ctx):
    pts = [MacroPoint([1, 0, 0], [0, 0, 0]), MacroPoint([-1, 0, 0], [1, 0, 0])]
    out = flow_map(harmonic_ctx.potential, harmonic_ctx.flow, 0.0, pts)
    assert all(isinstance(p, MacroPoint) for p in out)
    assert np.allclose(out[0].as_array(), pts[0].as_array())


def test_macropoint_validation():
    with pytest.raises(ConfigError):
        MacroPoint([np.nan, 0, 0], [0, 0, 0])
    with pytest.raises(ConfigError):
        MacroPoint([0, 0], [0, 0, 0])
