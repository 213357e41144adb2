"""Flow and scattering operators acting on phase functions by pullback.

Operators never materialize grids: applying one to a :class:`PhaseFunction`
returns a new PhaseFunction whose evaluator composes the flow map with the
original evaluator. The backward-flow operator evaluates f at the time -t
image of the input configuration; the scattering operator composes the full
interacting backward flow with forward free streaming of each particle,
which reduces to the identity for one particle and for the free potential.
"""

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .dynamics import FlowConfig, PotentialSpec, flow_map_batch, _as_config
from .errors import ArityMismatchError


@dataclass(frozen=True)
class PhaseFunction:
    """An evaluable symmetric function of k velocity-position points.

    ``eval_batch`` maps an array of configurations (B, k, 6) to values (B,).
    Symmetry under argument permutation is a convention of the callers, not
    enforced here; ``check_symmetry`` samples it.
    """

    arity: int
    eval_batch: Callable[[np.ndarray], np.ndarray]
    integrability_hint: Optional[float] = None

    def __call__(self, points) -> float:
        pts = _as_config(points)
        if pts.shape[0] != self.arity:
            raise ArityMismatchError(
                f"function of arity {self.arity} applied to {pts.shape[0]} points")
        return float(self.eval_batch(pts[None, :, :])[0])

    def evaluate_batch(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        if pts.ndim != 3 or pts.shape[1] != self.arity or pts.shape[2] != 6:
            raise ArityMismatchError(
                f"expected batch shape (B, {self.arity}, 6), got {pts.shape}")
        return np.asarray(self.eval_batch(pts), dtype=float)

    @classmethod
    def from_pointwise(cls, arity: int, fn: Callable, hint=None):
        """Wrap a scalar callable fn(pts: (k, 6) array) -> float."""
        def batch(pts):
            return np.array([fn(p) for p in pts], dtype=float)
        return cls(arity, batch, hint)


def phase_sum(arity: int, terms: Sequence[tuple], hint=None) -> PhaseFunction:
    """Linear combination sum_i c_i f_i as a lazy PhaseFunction.

    terms is a sequence of (coefficient, PhaseFunction); evaluation order is
    the given order, so results are deterministic.
    """
    terms = [(float(c), f) for c, f in terms]
    for _, f in terms:
        if f.arity != arity:
            raise ArityMismatchError("phase_sum terms must share the arity")

    def batch(pts):
        acc = np.zeros(pts.shape[0])
        for c, f in terms:
            acc += c * f.eval_batch(pts)
        return acc

    return PhaseFunction(arity, batch, hint)


def check_symmetry(f: PhaseFunction, rng, n_trials: int = 8, scale: float = 1.0):
    """Max deviation of f under random argument permutations at random points."""
    worst = 0.0
    for _ in range(n_trials):
        pts = rng.normal(scale=scale, size=(1, f.arity, 6))
        perm = rng.permutation(f.arity)
        a = f.eval_batch(pts)[0]
        b = f.eval_batch(pts[:, perm, :])[0]
        worst = max(worst, abs(a - b))
    return worst


@dataclass(frozen=True)
class OperatorContext:
    """Potential and integrator settings shared by all operator applications."""

    potential: PotentialSpec
    flow: FlowConfig


def backward_flow_points(ctx: OperatorContext, t: float, pts: np.ndarray) -> np.ndarray:
    """Time -t image of a batch of configurations under the interacting flow."""
    return flow_map_batch(ctx.potential, ctx.flow, -t, pts)


def scatter_points(ctx: OperatorContext, t: float, pts: np.ndarray) -> np.ndarray:
    """Scattering image: interacting backward flow, then free streaming by t.

    Each particle's outgoing point is (V_i(-t), R_i(-t) + t V_i(-t)).
    """
    out = flow_map_batch(ctx.potential, ctx.flow, -t, pts)
    out[:, :, 3:] += t * out[:, :, :3]
    return out


def backward_flow_operator(ctx: OperatorContext, t: float,
                           f: PhaseFunction) -> PhaseFunction:
    """Pullback of f along the backward flow: evaluates f at the -t image."""
    if t == 0.0:
        return f

    def batch(pts):
        return f.eval_batch(backward_flow_points(ctx, t, pts))

    return PhaseFunction(f.arity, batch, f.integrability_hint)


def scattering_operator(ctx: OperatorContext, t: float,
                        f: PhaseFunction) -> PhaseFunction:
    """Scattering pullback; exact identity for arity 1 or t = 0."""
    if t == 0.0 or f.arity == 1:
        return f

    def batch(pts):
        return f.eval_batch(scatter_points(ctx, t, pts))

    return PhaseFunction(f.arity, batch, f.integrability_hint)


def free_stream_operator(t: float, f: PhaseFunction) -> PhaseFunction:
    """Pullback along forward free streaming of every argument separately."""
    if t == 0.0:
        return f

    def batch(pts):
        moved = pts.copy()
        moved[:, :, 3:] += t * moved[:, :, :3]
        return f.eval_batch(moved)

    return PhaseFunction(f.arity, batch, f.integrability_hint)


def scattering_operator_composed(ctx: OperatorContext, t: float,
                                 f: PhaseFunction) -> PhaseFunction:
    """Scattering operator built as the operator product it abbreviates.

    Composes per-particle free streaming with the joint backward flow as two
    separate pullback layers; cross-checked against ``scattering_operator``.
    """
    return backward_flow_operator(ctx, t, free_stream_operator(t, f))


def apply_S(ctx: OperatorContext, t: float, f: PhaseFunction, points) -> float:
    """Evaluate the backward-flow operator at one configuration."""
    return backward_flow_operator(ctx, t, f)(points)


def apply_S_hat(ctx: OperatorContext, t: float, f: PhaseFunction, points) -> float:
    """Evaluate the scattering operator at one configuration."""
    return scattering_operator(ctx, t, f)(points)
