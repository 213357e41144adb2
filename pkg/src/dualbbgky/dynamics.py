"""Hamiltonian flow maps for k-particle clusters in velocity-position variables.

Particles have unit mass. A configuration point carries a velocity and a
position in R^3; clusters of k particles evolve under

    dR_i/dt = V_i,      dV_i/dt = -sum_{j != i} grad Phi(R_i - R_j)

integrated by velocity Verlet (symplectic and time reversible). Backward
evolution integrates with a negated time step rather than inverting
trajectories, so reversibility is a measurable property of the integrator.

Three smooth pair potentials are supported: ``free`` (Phi = 0), a harmonic
pair Phi(d) = amplitude * |d|^2 / 2, and a bounded gaussian pair
Phi(d) = amplitude * exp(-|d|^2 / (2 range^2)). Singular potentials are out of
scope; the flows here are globally defined.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import ConfigError, StepBudgetError

POTENTIAL_KINDS = ("free", "harmonic-pair", "gaussian-pair")
_KIND_CODE = {"free": _kernels.POT_FREE,
              "harmonic-pair": _kernels.POT_HARMONIC,
              "gaussian-pair": _kernels.POT_GAUSSIAN}


@dataclass(frozen=True)
class MacroPoint:
    """A point xi = (v, r) in velocity-position space R^3 x R^3."""

    v: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.v, dtype=float)
        r = np.asarray(self.r, dtype=float)
        if v.shape != (3,) or r.shape != (3,):
            raise ConfigError("MacroPoint components must be 3-vectors")
        if not (np.isfinite(v).all() and np.isfinite(r).all()):
            raise ConfigError("MacroPoint components must be finite")
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "r", r)

    def as_array(self):
        return np.concatenate([self.v, self.r])

    @classmethod
    def from_array(cls, a):
        a = np.asarray(a, dtype=float)
        return cls(a[:3].copy(), a[3:].copy())


@dataclass(frozen=True)
class PhasePoint:
    """Microscopic phase-space coordinates (p, q).

    Positions and momenta obey the same pair-interaction equations as the
    (v, r) variables with unit mass, so the one integrator below serves both;
    this type only marks the microscopic role at API boundaries.
    """

    p: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        q = np.asarray(self.q, dtype=float)
        if p.shape != (3,) or q.shape != (3,):
            raise ConfigError("PhasePoint components must be 3-vectors")
        if not (np.isfinite(p).all() and np.isfinite(q).all()):
            raise ConfigError("PhasePoint components must be finite")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)


@dataclass(frozen=True)
class PotentialSpec:
    """Pair potential selection: kind, energy scale, interaction length."""

    kind: str = "free"
    amplitude: float = 1.0
    range: float = 1.0

    def __post_init__(self):
        if self.kind not in POTENTIAL_KINDS:
            raise ConfigError(f"unknown potential kind {self.kind!r}; "
                              f"expected one of {POTENTIAL_KINDS}")
        if not (self.amplitude >= 0.0 and np.isfinite(self.amplitude)):
            raise ConfigError("potential amplitude must be finite and >= 0")
        if self.kind == "gaussian-pair" and not self.range > 0.0:
            raise ConfigError("gaussian-pair potential needs range > 0")

    @property
    def kind_code(self) -> int:
        return _KIND_CODE[self.kind]


@dataclass(frozen=True)
class FlowConfig:
    """Integrator settings: time step and a hard step budget."""

    step: float = 1e-3
    scheme: str = "velocity-verlet"
    max_steps: int = 1_000_000

    def __post_init__(self):
        if not self.step > 0.0:
            raise ConfigError("flow step must be > 0")
        if self.scheme != "velocity-verlet":
            raise ConfigError(f"unknown integrator scheme {self.scheme!r}")
        if not self.max_steps >= 1:
            raise ConfigError("max_steps must be a positive integer")


def pair_potential(spec: PotentialSpec, d) -> float:
    """Phi(d) for displacement d; symmetric in d -> -d."""
    d = np.asarray(d, dtype=float)
    s2 = float(d @ d)
    if spec.kind == "free":
        return 0.0
    if spec.kind == "harmonic-pair":
        return 0.5 * spec.amplitude * s2
    return spec.amplitude * np.exp(-0.5 * s2 / spec.range**2)


def pair_potential_grad(spec: PotentialSpec, d) -> np.ndarray:
    """grad_d Phi(d)."""
    d = np.asarray(d, dtype=float)
    if spec.kind == "free":
        return np.zeros(3)
    if spec.kind == "harmonic-pair":
        return spec.amplitude * d
    s2 = float(d @ d)
    return -(spec.amplitude / spec.range**2) * np.exp(-0.5 * s2 / spec.range**2) * d


def force_on(spec: PotentialSpec, points, i: int) -> np.ndarray:
    """Total force on particle i: -sum_{j != i} grad Phi(r_i - r_j)."""
    pts = _as_config(points)
    k = pts.shape[0]
    if not 0 <= i < k:
        raise IndexError(f"particle index {i} out of range for k={k}")
    out = np.zeros(3)
    for j in range(k):
        if j != i:
            out -= pair_potential_grad(spec, pts[i, 3:] - pts[j, 3:])
    return out


def hamiltonian_energy(spec: PotentialSpec, points) -> float:
    """Kinetic plus pair-potential energy of a configuration."""
    pts = _as_config(points)
    kinetic = 0.5 * float((pts[:, :3] ** 2).sum())
    pot = float(_kernels.potential_energy(
        spec.kind_code, spec.amplitude, spec.range, pts[None, :, 3:].copy())[0])
    return kinetic + pot


def flow_map_batch(spec: PotentialSpec, cfg: FlowConfig, t: float,
                   pts: np.ndarray) -> np.ndarray:
    """Flow a batch of configurations by signed time t.

    pts has shape (B, k, 6); a fresh array is returned. The free kind and
    single-particle clusters use the exact closed form (v, r + t v); other
    cases run velocity Verlet with n = ceil(|t|/step) steps of size t/n.
    """
    pts = np.ascontiguousarray(pts, dtype=float)
    if pts.ndim != 3 or pts.shape[2] != 6:
        raise ConfigError("flow batch must have shape (B, k, 6)")
    if t == 0.0:
        return pts.copy()
    out = pts.copy()
    if spec.kind == "free" or pts.shape[1] == 1:
        out[:, :, 3:] += t * out[:, :, :3]
        return out
    n_steps = int(np.ceil(abs(t) / cfg.step - 1e-12))
    n_steps = max(n_steps, 1)
    if n_steps > cfg.max_steps:
        raise StepBudgetError(
            f"|t|={abs(t)} at step={cfg.step} needs {n_steps} steps "
            f"> max_steps={cfg.max_steps}")
    dt = t / n_steps
    v = np.ascontiguousarray(out[:, :, :3])
    r = np.ascontiguousarray(out[:, :, 3:])
    _kernels.verlet_flow(spec.kind_code, spec.amplitude, spec.range,
                         dt, n_steps, v, r)
    out[:, :, :3] = v
    out[:, :, 3:] = r
    return out


def flow_map(spec: PotentialSpec, cfg: FlowConfig, t: float, points):
    """Flow a list of k MacroPoints by signed time t."""
    pts = _as_config(points)
    flowed = flow_map_batch(spec, cfg, t, pts[None, :, :])[0]
    return [MacroPoint(p[:3].copy(), p[3:].copy()) for p in flowed]


def _as_config(points) -> np.ndarray:
    """Normalize a list of MacroPoints or an (k, 6) array to (k, 6)."""
    if isinstance(points, np.ndarray):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 6:
            raise ConfigError("configuration array must have shape (k, 6)")
        return pts
    return np.stack([p.as_array() for p in points])
