"""Truncated series solutions for averages of phase-density observables.

The solver never time-steps. Each output is a closed-form-in-time series: the
order-n term flows a cluster-plus-n-extras configuration through the order-
(1+n) cumulant and integrates the extra arguments by Monte Carlo. Values are
reported per (time, probe, order) with standard errors and cumulative sums.

Error accounting conventions: order-0 terms are evaluated exactly (no
sampling); Monte Carlo cells derive their RNG stream from the master seed and
the (probe, order, time) key, so traces are reproducible and cells are
independent. With ``time_crn`` the time component is dropped from the key and
all times of a cell share one sample stream, which keeps time differences
smooth for residual checks. Finite-difference stencils (velocity derivatives
in the collision integral, spatial derivatives in the residual) always share
one sample stream across the stencil, and their standard errors are computed
from the per-sample differenced values.
"""

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .cumulants import ORDER_CAP, ClusterIndexSet, cumulant_operator, expansion_operator
from .density import OneParticleDensity, QuadratureSpec, product_density
from .dynamics import PotentialSpec
from .errors import ConfigError, OrderCapError, QuadratureError
from .operators import OperatorContext, PhaseFunction

THEOREM_THRESHOLD = math.exp(-10) / (1.0 + math.exp(-9))

_BASE_PROBES = np.array([
    [0.0, 0.0, 0.0,  0.0, 0.0, 0.0],
    [0.5, 0.0, 0.0,  0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0,  0.5, 0.0, 0.0],
    [1.0, 0.0, 0.0, -0.5, 0.0, 0.0],
    [0.0, 1.0, 0.0,  0.0, 0.5, 0.0],
    [0.0, 0.0, -1.0, 0.0, 0.0, 1.0],
    [2.0, 0.0, 0.0,  0.0, 0.0, 0.0],
    [0.5, 0.5, 0.0,  2.0, 0.0, 0.0],
])


def functional_threshold(k: int) -> float:
    """Convergence threshold for the arity-k marginal functional."""
    return math.exp(-(3 * k + 2))


def standard_probes(arity: int = 1, sigma_v: float = 1.0,
                    sigma_r: float = 1.0) -> np.ndarray:
    """The documented set of 8 probe configurations, shape (8, arity, 6).

    Single-argument probes span the near-origin region and the 2-sigma tails
    in velocity and position; higher arities combine rotated picks from the
    same base set.
    """
    base = _BASE_PROBES.copy()
    base[:, :3] *= sigma_v
    base[:, 3:] *= sigma_r
    out = np.empty((8, arity, 6))
    for i in range(8):
        for j in range(arity):
            out[i, j] = base[(i + 3 * j) % 8]
    return out


@dataclass(frozen=True)
class SeriesConfig:
    """Truncation order, evaluation times, quadrature and probe selection.

    With ``observation_bandwidth`` set, every reported value is the series
    term convolved with the observation kernel of that bandwidth (the probe
    is jittered per Monte Carlo sample; the order-0 term uses the closed
    form). This is the convention matching empirical densities, which place
    the same kernel on evolved particles.
    """

    truncation_order: int = 2
    times: Sequence[float] = (0.05, 0.1)
    quadrature: QuadratureSpec = field(default_factory=QuadratureSpec)
    renormalized: bool = False
    arity: int = 1
    probes: Optional[np.ndarray] = None
    time_crn: bool = False
    observation_bandwidth: Optional[float] = None

    def __post_init__(self):
        if not 0 <= self.truncation_order <= ORDER_CAP:
            raise OrderCapError(
                f"truncation order must lie in 0..{ORDER_CAP}")
        if self.arity < 1:
            raise ConfigError("series arity must be >= 1")
        times = tuple(float(t) for t in self.times)
        if not all(np.isfinite(times)):
            raise ConfigError("series times must be finite")
        object.__setattr__(self, "times", times)

    def probe_array(self, sigma_v=1.0, sigma_r=1.0) -> np.ndarray:
        if self.probes is None:
            return standard_probes(self.arity, sigma_v, sigma_r)
        p = np.asarray(self.probes, dtype=float)
        if p.ndim == 2:
            p = p[:, None, :]
        if p.shape[1] != self.arity or p.shape[2] != 6:
            raise ConfigError("probes must have shape (P, arity, 6)")
        return p


@dataclass
class SolutionTrace:
    """Per (time, probe, order) values of a truncated series solution."""

    arity: int
    times: tuple
    probes: np.ndarray           # (P, arity, 6)
    values: np.ndarray           # (T, P, N+1)
    std_errors: np.ndarray       # (T, P, N+1)
    initial_mass: float
    meta: dict

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.values, axis=2)

    @property
    def cumulative_std(self) -> np.ndarray:
        return np.sqrt(np.cumsum(self.std_errors**2, axis=2))

    def rows(self):
        """Flat (t, probe_id, order, value, std_error, cumulative) records."""
        cum = self.cumulative
        out = []
        for ti, t in enumerate(self.times):
            for p in range(self.probes.shape[0]):
                for n in range(self.values.shape[2]):
                    out.append({
                        "t": t, "probe_id": p, "order": n,
                        "value": self.values[ti, p, n],
                        "std_error": self.std_errors[ti, p, n],
                        "cumulative": cum[ti, p, n],
                    })
        return out

    def to_json_dict(self):
        return {
            "arity": self.arity,
            "times": list(self.times),
            "probes": self.probes.tolist(),
            "values": self.values.tolist(),
            "std_errors": self.std_errors.tolist(),
            "initial_mass": self.initial_mass,
            "meta": self.meta,
        }

    @classmethod
    def from_json_dict(cls, d) -> "SolutionTrace":
        return cls(int(d["arity"]), tuple(d["times"]),
                   np.asarray(d["probes"], dtype=float),
                   np.asarray(d["values"], dtype=float),
                   np.asarray(d["std_errors"], dtype=float),
                   float(d["initial_mass"]), dict(d["meta"]))


def _cell_seed(master, *parts):
    return [int(master) & 0xFFFFFFFF] + [int(p) & 0xFFFFFFFF for p in parts]


def _product_of_factor(factor: PhaseFunction, k: int) -> PhaseFunction:
    """Product of one arity-1 function over k argument slots."""
    def batch(pts):
        out = np.ones(pts.shape[0])
        for i in range(k):
            out *= factor.eval_batch(np.ascontiguousarray(pts[:, i:i + 1, :]))
        return out
    hint = None
    if factor.integrability_hint is not None:
        hint = factor.integrability_hint**k
    return PhaseFunction(k, batch, hint)


def _order_samples(op: PhaseFunction, probe_variants: np.ndarray, n: int,
                   proposal: OneParticleDensity, n_samples: int, rng,
                   observation_bandwidth: Optional[float] = None):
    """Weighted integrand samples for one order at a stencil of probes.

    probe_variants has shape (S, k, 6); every stencil point is evaluated
    against the same drawn extras, so linear combinations across the stencil
    difference away the shared noise. With an observation bandwidth the probe
    arguments are jittered by the kernel per sample, making the sample mean
    an unbiased estimate of the kernel-smoothed term. Returns an
    (n_samples, S) array already divided by the proposal pdf and by n
    factorial.
    """
    S, k, _ = probe_variants.shape
    extras = proposal.sample(rng, n_samples * n).reshape(n_samples, n, 6)
    pdf = np.ones(n_samples)
    for j in range(n):
        pdf *= proposal.normalized_pdf_batch(extras[:, j, :])
    if (pdf <= 0.0).any():
        raise QuadratureError("proposal has zero mass at sampled points")
    jitter = None
    if observation_bandwidth is not None:
        jitter = rng.normal(scale=observation_bandwidth,
                            size=(n_samples, k, 6))
    out = np.empty((n_samples, S))
    for s in range(S):
        base = np.broadcast_to(probe_variants[s], (n_samples, k, 6))
        if jitter is not None:
            base = base + jitter
        full = np.concatenate([base, extras], axis=1)
        out[:, s] = op.eval_batch(np.ascontiguousarray(full)) / pdf
    return out / math.factorial(n)


def smeared_transport_value(density: OneParticleDensity, t: float,
                            probes: np.ndarray,
                            observation_bandwidth: float) -> np.ndarray:
    """Kernel-smoothed free-transport values: (T_t density * K)(probe).

    Closed form: transporting then observing a mixture through the shear
    (v, r) -> (v, r - t v) composes the mixture kernel with the sheared
    observation kernel, giving per-axis 2x2 covariances
    h^2 [[2, -t], [-t, 2 + t^2]] around the back-transported probe.
    """
    probes = np.asarray(probes, dtype=float).reshape(-1, 6)
    h2 = density.bandwidth**2
    g2 = observation_bandwidth**2
    a = h2 + g2
    b = -g2 * t
    c = h2 + g2 * (1.0 + t * t)
    det = a * c - b * b
    inv_a, inv_b, inv_c = c / det, -b / det, a / det
    norm = (2.0 * math.pi) ** -3 * det ** -1.5
    moved = probes.copy()
    moved[:, 3:] -= t * moved[:, :3]
    dv = moved[:, None, :3] - density.points[None, :, :3]
    dr = moved[:, None, 3:] - density.points[None, :, 3:]
    quad = (inv_a * (dv * dv).sum(axis=2)
            + 2.0 * inv_b * (dv * dr).sum(axis=2)
            + inv_c * (dr * dr).sum(axis=2))
    return norm * (np.exp(-0.5 * quad) @ density.weights)


def _series_operator(initial, ctx, t, k, n):
    ground = ClusterIndexSet(k, n)
    return cumulant_operator(ctx, t, ground.elements(),
                             product_density(initial, k + n))


def solve_series_cell(initial: OneParticleDensity, cfg: SeriesConfig,
                      ctx: OperatorContext, ti: int, n: int):
    """Order-n term at time index ti for every probe: (values, std_errors).

    Cells are independent pure computations keyed by (probe, order, time), so
    they may run concurrently and be assembled in any order.
    """
    k = cfg.arity
    probes = cfg.probe_array()
    P = probes.shape[0]
    t = cfg.times[ti]
    q = cfg.quadrature
    proposal = q.proposal if q.proposal is not None else initial
    smear = cfg.observation_bandwidth
    if smear is not None and k != 1:
        raise ConfigError("observation smearing is supported at arity 1 only")
    op = _series_operator(initial, ctx, t, k, n)
    values = np.zeros(P)
    errors = np.zeros(P)
    if n == 0:
        if smear is None:
            values[:] = op.eval_batch(probes)
        else:
            values[:] = smeared_transport_value(initial, t, probes[:, 0, :],
                                                smear)
        return values, errors
    for p in range(P):
        key = _cell_seed(q.seed, p, n) if cfg.time_crn \
            else _cell_seed(q.seed, p, n, ti)
        rng = np.random.default_rng(key)
        samples = _order_samples(op, probes[p:p + 1], n, proposal,
                                 q.n_samples, rng,
                                 observation_bandwidth=smear)[:, 0]
        values[p] = samples.mean()
        errors[p] = samples.std(ddof=1) / math.sqrt(len(samples))
    return values, errors


def solve_series(initial: OneParticleDensity, cfg: SeriesConfig,
                 ctx: OperatorContext) -> SolutionTrace:
    """Series solution for the arity-k phase-density average at probe points.

    Order 0 is the exact backward-flow pullback of the product initial data;
    order n >= 1 Monte Carlo integrates the order-(1+n) cumulant applied to
    the (k+n)-fold product over the n extra arguments.
    """
    probes = cfg.probe_array()
    N = cfg.truncation_order
    values = np.zeros((len(cfg.times), probes.shape[0], N + 1))
    errors = np.zeros_like(values)
    for ti in range(len(cfg.times)):
        for n in range(N + 1):
            values[ti, :, n], errors[ti, :, n] = solve_series_cell(
                initial, cfg, ctx, ti, n)
    meta = _trace_meta(initial, cfg, ctx)
    return SolutionTrace(cfg.arity, cfg.times, probes, values, errors,
                         initial.total_mass, meta)


def _trace_meta(initial, cfg, ctx):
    return {
        "potential": {"kind": ctx.potential.kind,
                      "amplitude": ctx.potential.amplitude,
                      "range": ctx.potential.range},
        "step": ctx.flow.step,
        "bandwidth": initial.bandwidth,
        "mass": initial.total_mass,
        "arity": cfg.arity,
        "truncation_order": cfg.truncation_order,
        "renormalized": cfg.renormalized,
        "seed": cfg.quadrature.seed,
        "n_samples": cfg.quadrature.n_samples,
        "observation_bandwidth": cfg.observation_bandwidth,
    }


def solve_series_g1(initial, cfg, ctx) -> SolutionTrace:
    """One-particle series solution; arity forced to 1."""
    return solve_series(initial, replace(cfg, arity=1), ctx)


def solve_series_gk(initial, k, cfg, ctx) -> SolutionTrace:
    """Arity-k series solution with product (chaos) initial data."""
    return solve_series(initial, replace(cfg, arity=k), ctx)


# ---------------------------------------------------------------------------
# marginal functionals
# ---------------------------------------------------------------------------

@dataclass
class FunctionalResult:
    """Marginal-functional values per probe and order, with errors."""

    arity: int
    t: float
    probes: np.ndarray
    values: np.ndarray       # (P, N+1)
    std_errors: np.ndarray
    in_regime: bool
    renormalized: bool

    @property
    def cumulative(self):
        return np.cumsum(self.values, axis=1)

    @property
    def cumulative_std(self):
        return np.sqrt(np.cumsum(self.std_errors**2, axis=1))


def functional_values(k: int, t: float, factor: PhaseFunction,
                      proposal: OneParticleDensity, cfg: SeriesConfig,
                      ctx: OperatorContext, probes: np.ndarray,
                      renormalized: Optional[bool] = None) -> FunctionalResult:
    """Expansion of the arity-k functional over products of a one-particle factor.

    factor is the arity-1 function multiplied over all k+n slots; proposal
    drives the sampling of the n extra arguments. The spec-level entry point
    ``marginal_functional`` passes the same density for both roles.
    """
    if renormalized is None:
        renormalized = cfg.renormalized
    probes = np.asarray(probes, dtype=float).reshape(-1, k, 6)
    P = probes.shape[0]
    N = cfg.truncation_order
    q = cfg.quadrature
    values = np.zeros((P, N + 1))
    errors = np.zeros_like(values)
    for n in range(N + 1):
        op = expansion_operator(ctx, t, n, k, _product_of_factor(factor, k + n),
                                renormalized=renormalized)
        if n == 0:
            values[:, 0] = op.eval_batch(probes)
            continue
        for p in range(P):
            rng = np.random.default_rng(_cell_seed(q.seed, 7000 + p, n))
            samples = _order_samples(op, probes[p:p + 1], n, proposal,
                                     q.n_samples, rng)[:, 0]
            values[p, n] = samples.mean()
            errors[p, n] = samples.std(ddof=1) / math.sqrt(len(samples))
    mass = proposal.total_mass
    in_regime = mass < functional_threshold(k)
    return FunctionalResult(k, t, probes, values, errors, in_regime,
                            renormalized)


def marginal_functional(k: int, t: float, g1_t: OneParticleDensity,
                        cfg: SeriesConfig, ctx: OperatorContext,
                        probes=None) -> FunctionalResult:
    """Arity-k marginal functional of a one-particle state (k >= 2)."""
    if k < 2:
        raise ConfigError("marginal functionals are defined for k >= 2")
    if probes is None:
        probes = standard_probes(k)
    return functional_values(k, t, g1_t.as_phase_function(), g1_t, cfg, ctx,
                             probes)


def transport_pullback_factor(initial: OneParticleDensity,
                              t: float) -> PhaseFunction:
    """Initial density evaluated at (v, r - t v): the exact one-particle
    backward-flow pullback, valid for every potential."""
    def batch(pts):
        moved = pts[:, 0, :].copy()
        moved[:, 3:] -= t * moved[:, :3]
        return initial.evaluate_batch(moved)
    return PhaseFunction(1, batch, integrability_hint=initial.total_mass)


def transported_density(initial: OneParticleDensity,
                        t: float) -> OneParticleDensity:
    """Mixture with kernel centers streamed freely to time t (same weights)."""
    pts = initial.points.copy()
    pts[:, 3:] += t * pts[:, :3]
    return OneParticleDensity(initial.weights.copy(), pts, initial.bandwidth)


# ---------------------------------------------------------------------------
# collision integral and residual
# ---------------------------------------------------------------------------

def _grad_phi_batch(spec: PotentialSpec, d: np.ndarray) -> np.ndarray:
    """grad Phi for a batch of displacements (B, 3)."""
    if spec.kind == "free":
        return np.zeros_like(d)
    if spec.kind == "harmonic-pair":
        return spec.amplitude * d
    s2 = (d * d).sum(axis=1)
    w = -(spec.amplitude / spec.range**2) * np.exp(-0.5 * s2 / spec.range**2)
    return w[:, None] * d


def collision_integral(xi1, t: float, initial: OneParticleDensity,
                       cfg: SeriesConfig, ctx: OperatorContext,
                       dv: float = 1e-3,
                       factor: Optional[PhaseFunction] = None,
                       proposal: Optional[OneParticleDensity] = None):
    """Pair-functional collision integral at one probe point.

    Computes the integral over the collision partner of the potential
    gradient contracted with the velocity derivative of the arity-2 marginal
    functional. The velocity derivative uses a central difference of step dv
    whose stencil shares one sample stream, and the extra arguments of every
    functional order are folded into the same Monte Carlo average. Exactly
    zero for the free potential.
    """
    if hasattr(xi1, "as_array"):
        xi1 = xi1.as_array()
    xi1 = np.asarray(xi1, dtype=float).reshape(6)
    if ctx.potential.kind == "free":
        return 0.0, 0.0
    if factor is None:
        factor = transport_pullback_factor(initial, t)
    if proposal is None:
        proposal = transported_density(initial, t)
    q = cfg.quadrature
    N = cfg.truncation_order
    total = 0.0
    var = 0.0
    for n in range(N + 1):
        op = expansion_operator(ctx, t, n, 2, _product_of_factor(factor, 2 + n),
                                renormalized=cfg.renormalized)
        rng = np.random.default_rng(_cell_seed(q.seed, 9000, n))
        B = q.n_samples
        extras = proposal.sample(rng, B * (1 + n)).reshape(B, 1 + n, 6)
        pdf = np.ones(B)
        for j in range(1 + n):
            pdf *= proposal.normalized_pdf_batch(extras[:, j, :])
        if (pdf <= 0.0).any():
            raise QuadratureError("proposal has zero mass at sampled points")
        grad = _grad_phi_batch(ctx.potential, xi1[3:] - extras[:, 0, 3:])
        per_sample = np.zeros(B)
        for c in range(3):
            plus = xi1.copy()
            minus = xi1.copy()
            plus[c] += dv
            minus[c] -= dv
            stack = []
            for var_pt in (plus, minus):
                full = np.concatenate(
                    [np.broadcast_to(var_pt, (B, 1, 6)), extras], axis=1)
                stack.append(op.eval_batch(np.ascontiguousarray(full)))
            dfdv = (stack[0] - stack[1]) / (2.0 * dv)
            per_sample += grad[:, c] * dfdv
        per_sample /= pdf * math.factorial(n)
        total += per_sample.mean()
        var += per_sample.var(ddof=1) / B
    return float(total), float(math.sqrt(var))


@dataclass
class ResidualReport:
    """Kinetic-equation residuals per (interior time, probe)."""

    times: list
    probe_ids: list
    residuals: np.ndarray        # (T_int, P)
    error_bars: np.ndarray       # (T_int, P) one-sigma combined MC bars
    fd_time_bound: np.ndarray    # (T_int, P) Richardson bound when available
    parts: dict                  # named contributions for diagnostics


def kinetic_residual(initial: OneParticleDensity, trace: SolutionTrace,
                     cfg: SeriesConfig, ctx: OperatorContext,
                     dr: float = 1e-3, dv: float = 1e-3) -> ResidualReport:
    """Residual of the one-particle evolution equation on a solved trace.

    The time derivative comes from central differences of the trace's
    cumulative values on its (uniform) time grid; the transport term
    differentiates fresh series evaluations sharing the trace's sample
    streams; the collision term is Monte Carlo. Error bars combine the Monte
    Carlo standard errors of all three pieces; a Richardson bound on the
    time-difference truncation is attached when the grid allows a doubled
    stencil.
    """
    if trace.arity != 1:
        raise ConfigError("kinetic residual is defined on arity-1 traces")
    times = np.asarray(trace.times)
    if len(times) < 3:
        raise ConfigError("need at least 3 time points for central differences")
    steps = np.diff(times)
    if not np.allclose(steps, steps[0], rtol=1e-9, atol=1e-12):
        raise ConfigError("residual requires a uniform time grid")
    dt = float(steps[0])
    cum = trace.cumulative[:, :, -1]
    cum_sig = trace.cumulative_std[:, :, -1]
    P = trace.probes.shape[0]
    q = cfg.quadrature
    N = cfg.truncation_order
    proposal = q.proposal if q.proposal is not None else initial

    interior = list(range(1, len(times) - 1))
    residuals = np.zeros((len(interior), P))
    bars = np.zeros_like(residuals)
    fd_bound = np.zeros_like(residuals)
    parts = {"dgdt": np.zeros_like(residuals),
             "transport": np.zeros_like(residuals),
             "collision": np.zeros_like(residuals)}

    for row, ti in enumerate(interior):
        t = float(times[ti])
        for p in range(P):
            dgdt = (cum[ti + 1, p] - cum[ti - 1, p]) / (2.0 * dt)
            sig_t = math.sqrt(cum_sig[ti + 1, p]**2 + cum_sig[ti - 1, p]**2) / (2.0 * dt)
            if 2 <= ti < len(times) - 2:
                wide = (cum[ti + 2, p] - cum[ti - 2, p]) / (4.0 * dt)
                fd_bound[row, p] = abs(dgdt - wide) / 3.0

            probe = trace.probes[p, 0]
            stencil = [probe]
            for c in range(3):
                plus = probe.copy()
                minus = probe.copy()
                plus[3 + c] += dr
                minus[3 + c] -= dr
                stencil.extend([plus, minus])
            stencil = np.asarray(stencil)[:, None, :]
            vals = np.zeros(len(stencil))
            var_sp = 0.0
            for n in range(N + 1):
                op = _series_operator(initial, ctx, t, 1, n)
                if n == 0:
                    vals += op.eval_batch(stencil)
                    continue
                key = _cell_seed(q.seed, p, n) if cfg.time_crn \
                    else _cell_seed(q.seed, p, n, ti)
                rng = np.random.default_rng(key)
                samples = _order_samples(op, stencil, n, proposal,
                                         q.n_samples, rng)
                vals += samples.mean(axis=0)
                grad_samples = np.zeros(samples.shape[0])
                for c in range(3):
                    diff = (samples[:, 1 + 2 * c] - samples[:, 2 + 2 * c]) / (2.0 * dr)
                    grad_samples += probe[c] * diff
                var_sp += grad_samples.var(ddof=1) / samples.shape[0]
            transport = 0.0
            for c in range(3):
                transport += probe[c] * (vals[1 + 2 * c] - vals[2 + 2 * c]) / (2.0 * dr)
            sig_sp = math.sqrt(var_sp)

            coll, sig_coll = collision_integral(probe, t, initial, cfg, ctx,
                                                dv=dv)
            residuals[row, p] = dgdt + transport - coll
            bars[row, p] = math.sqrt(sig_t**2 + sig_sp**2 + sig_coll**2)
            parts["dgdt"][row, p] = dgdt
            parts["transport"][row, p] = transport
            parts["collision"][row, p] = coll

    return ResidualReport([float(times[i]) for i in interior], list(range(P)),
                          residuals, bars, fd_bound, parts)


def transport_residual(initial: OneParticleDensity, t: float, dt: float,
                       probe, dr: float = 1e-5) -> float:
    """Pure-transport residual of the exact free solution at one probe.

    Uses the analytic transported mixture at t +- dt for the time difference
    and a fine central difference in position, so the result isolates the
    O(dt^2) truncation of the time stencil; halving dt should show slope 2.
    """
    probe = np.asarray(probe, dtype=float).reshape(6)

    def g(tt, pt):
        moved = pt.copy()
        moved[3:] -= tt * moved[:3]
        return initial.evaluate(moved)

    dgdt = (g(t + dt, probe) - g(t - dt, probe)) / (2.0 * dt)
    transport = 0.0
    for c in range(3):
        plus = probe.copy()
        minus = probe.copy()
        plus[3 + c] += dr
        minus[3 + c] -= dr
        transport += probe[c] * (g(t, plus) - g(t, minus)) / (2.0 * dr)
    return dgdt + transport


# ---------------------------------------------------------------------------
# convergence accounting
# ---------------------------------------------------------------------------

@dataclass
class ConvergenceReport:
    """Theorem constants, regime flags and per-order majorants for a state."""

    initial_norm: float
    theorem_threshold: float
    functional_threshold_k: float
    arity: int
    in_regime: bool
    in_regime_functional: bool
    majorant_ratio: float
    term_majorants: list
    term_norms: Optional[list] = None

    def to_dict(self):
        return {
            "initial_norm": self.initial_norm,
            "theorem_threshold": self.theorem_threshold,
            "functional_threshold_k": self.functional_threshold_k,
            "arity": self.arity,
            "in_regime": self.in_regime,
            "in_regime_functional": self.in_regime_functional,
            "majorant_ratio": self.majorant_ratio,
            "term_majorants": self.term_majorants,
            "term_norms": self.term_norms,
        }


def convergence_report(initial: OneParticleDensity, k: int,
                       orders: int = 3,
                       term_norms: Optional[list] = None) -> ConvergenceReport:
    """Regime accounting: printed constants, flags, geometric majorants.

    The order-n cumulant term is bounded by e^(n+2) * norm^(k+n), so
    successive terms shrink by at least e * norm once the initial norm is
    below the theorem threshold.
    """
    mass = initial.total_mass
    thresh_fn = functional_threshold(k)
    majorants = [math.exp(n + 2) * mass**(k + n) for n in range(orders + 1)]
    return ConvergenceReport(
        initial_norm=mass,
        theorem_threshold=THEOREM_THRESHOLD,
        functional_threshold_k=thresh_fn,
        arity=k,
        in_regime=mass < THEOREM_THRESHOLD,
        in_regime_functional=mass < thresh_fn,
        majorant_ratio=math.e * mass,
        term_majorants=majorants,
        term_norms=term_norms,
    )


def series_term_l1(initial: OneParticleDensity, k: int, n: int, t: float,
                   ctx: OperatorContext, quad: QuadratureSpec,
                   include_factorial: bool = True):
    """Monte Carlo L1 magnitude of the order-n series term (all arguments).

    Estimates the integral over every argument of |cumulant applied to the
    (k+n)-fold product|; with include_factorial the 1/n! series weight is
    applied, without it the raw cumulant integral is returned for comparison
    against the n! e^(n+2) norm^(k+n) growth bound.
    """
    op = _series_operator(initial, ctx, t, k, n)
    proposal = quad.proposal if quad.proposal is not None else initial
    rng = np.random.default_rng(_cell_seed(quad.seed, 5000, k, n))
    B = quad.n_samples
    m = k + n
    pts = proposal.sample(rng, B * m).reshape(B, m, 6)
    pdf = np.ones(B)
    for j in range(m):
        pdf *= proposal.normalized_pdf_batch(pts[:, j, :])
    vals = np.abs(op.eval_batch(np.ascontiguousarray(pts))) / pdf
    if include_factorial:
        vals = vals / math.factorial(n)
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(B))


def series_mass(initial: OneParticleDensity, cfg: SeriesConfig,
                ctx: OperatorContext, t: float):
    """Total integral of the truncated arity-1 solution at time t.

    Joint Monte Carlo over all arguments of every order; the order >= 1
    contributions integrate to zero by flow isometry plus coefficient
    cancellation, so the estimate should match the initial mass.
    """
    q = cfg.quadrature
    proposal = q.proposal if q.proposal is not None else initial
    total = 0.0
    var = 0.0
    for n in range(cfg.truncation_order + 1):
        op = _series_operator(initial, ctx, t, 1, n)
        rng = np.random.default_rng(_cell_seed(q.seed, 6000, n))
        B = q.n_samples
        m = 1 + n
        pts = proposal.sample(rng, B * m).reshape(B, m, 6)
        pdf = np.ones(B)
        for j in range(m):
            pdf *= proposal.normalized_pdf_batch(pts[:, j, :])
        vals = op.eval_batch(np.ascontiguousarray(pts)) / pdf / math.factorial(n)
        total += vals.mean()
        var += vals.var(ddof=1) / B
    return float(total), float(math.sqrt(var))
