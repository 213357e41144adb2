import math

import numpy as np
import pytest

from dualbbgky import FlowConfig, OperatorContext, PhaseFunction, PotentialSpec


@pytest.fixture(scope="session")
def flow_cfg():
    return FlowConfig(step=1e-3)


@pytest.fixture(scope="session")
def free_ctx(flow_cfg):
    return OperatorContext(PotentialSpec("free"), flow_cfg)


@pytest.fixture(scope="session")
def harmonic_ctx(flow_cfg):
    return OperatorContext(PotentialSpec("harmonic-pair", amplitude=1.0), flow_cfg)


@pytest.fixture(scope="session")
def gaussian_ctx(flow_cfg):
    return OperatorContext(
        PotentialSpec("gaussian-pair", amplitude=1.0, range=1.0), flow_cfg)


def harmonic_two_body(amplitude, t, pts):
    """Closed-form two-body flow for the harmonic pair potential.

    Center of mass streams freely; the relative coordinate rotates at
    angular frequency sqrt(2 * amplitude). pts has shape (2, 6).
    """
    w = math.sqrt(2.0 * amplitude)
    vc = 0.5 * (pts[0, :3] + pts[1, :3])
    rc = 0.5 * (pts[0, 3:] + pts[1, 3:])
    dv = pts[0, :3] - pts[1, :3]
    dr = pts[0, 3:] - pts[1, 3:]
    dr_t = dr * math.cos(w * t) + (dv / w) * math.sin(w * t)
    dv_t = -dr * w * math.sin(w * t) + dv * math.cos(w * t)
    out = np.empty((2, 6))
    out[0, :3] = vc + 0.5 * dv_t
    out[1, :3] = vc - 0.5 * dv_t
    out[0, 3:] = rc + t * vc + 0.5 * dr_t
    out[1, 3:] = rc + t * vc - 0.5 * dr_t
    return out


def gaussian_bump(arity, centers=None, width=1.0):
    """Smooth positive test function: product of Gaussians in all variables."""
    if centers is None:
        centers = np.zeros((arity, 6))
    centers = np.asarray(centers, dtype=float).reshape(arity, 6)

    def batch(pts):
        out = np.ones(pts.shape[0])
        for i in range(arity):
            d = pts[:, i, :] - centers[i]
            out *= np.exp(-0.5 * (d * d).sum(axis=1) / width**2)
        return out

    return PhaseFunction(arity, batch)


def position_bump(arity, width=1.0):
    """Test function depending on positions only (velocity gradient zero)."""

    def batch(pts):
        r = pts[:, :, 3:]
        return np.exp(-0.5 * (r * r).sum(axis=(1, 2)) / width**2)

    return PhaseFunction(arity, batch)
