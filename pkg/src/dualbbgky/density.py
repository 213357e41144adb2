"""Weighted-sample one-particle densities and Monte Carlo quadrature.

A one-particle density is a weighted particle ensemble with a Gaussian
mollifier: evaluation is a finite mixture of product Gaussian kernels of
bandwidth h on R^6, normalized so each kernel integrates to one. Densities
are immutable after construction. All integrals over velocity-position
variables are importance-sampled against a density used as the proposal;
estimates are deterministic given the quadrature seed.

Serialization is a columnar text format: one header line ``h mass`` followed
by one row ``w vx vy vz rx ry rz`` per sample.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from .errors import ConfigError, QuadratureError
from .operators import PhaseFunction


def kernel_peak(h: float) -> float:
    """Value of the unit-mass product Gaussian kernel at its center."""
    return (2.0 * math.pi * h * h) ** -3


@dataclass(frozen=True)
class OneParticleDensity:
    """Mixture of Gaussian kernels: sum_j w_j K_h(xi - xi_j), w_j >= 0."""

    weights: np.ndarray          # (M,)
    points: np.ndarray           # (M, 6) kernel centers, components v then r
    bandwidth: float
    total_mass: float = field(init=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        pts = np.asarray(self.points, dtype=float).reshape(len(w), 6)
        if not self.bandwidth > 0.0:
            raise ConfigError("mollifier bandwidth must be > 0")
        if len(w) and (not np.isfinite(w).all() or (w < 0).any()):
            raise ConfigError("sample weights must be finite and >= 0")
        if len(w) and not np.isfinite(pts).all():
            raise ConfigError("sample points must be finite")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "total_mass", float(w.sum()))

    def evaluate_batch(self, pts: np.ndarray) -> np.ndarray:
        pts = np.ascontiguousarray(pts, dtype=float).reshape(-1, 6)
        if len(self.weights) == 0:
            return np.zeros(pts.shape[0])
        return _kernels.mixture_eval(self.weights, self.points,
                                     self.bandwidth, pts)

    def evaluate(self, point) -> float:
        if hasattr(point, "as_array"):
            point = point.as_array()
        return float(self.evaluate_batch(np.asarray(point, float)[None, :])[0])

    def with_bandwidth(self, h: float) -> "OneParticleDensity":
        return OneParticleDensity(self.weights.copy(), self.points.copy(), h)

    def normalized_pdf_batch(self, pts: np.ndarray) -> np.ndarray:
        if self.total_mass <= 0.0:
            raise QuadratureError("zero-mass density cannot serve as a proposal")
        return self.evaluate_batch(pts) / self.total_mass

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw points from the normalized mixture (center choice + kernel noise)."""
        if self.total_mass <= 0.0:
            raise QuadratureError("cannot sample from a zero-mass density")
        idx = rng.choice(len(self.weights), size=size,
                         p=self.weights / self.total_mass)
        return self.points[idx] + rng.normal(scale=self.bandwidth, size=(size, 6))

    def sample_atoms(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw from the underlying weighted atoms, without mollifier noise."""
        if self.total_mass <= 0.0:
            raise QuadratureError("cannot sample from a zero-mass density")
        idx = rng.choice(len(self.weights), size=size,
                         p=self.weights / self.total_mass)
        return self.points[idx].copy()

    def as_phase_function(self) -> PhaseFunction:
        def batch(pts):
            return self.evaluate_batch(pts[:, 0, :])
        return PhaseFunction(1, batch, integrability_hint=self.total_mass)

    def to_text(self, path):
        header = f"{self.bandwidth!r} {self.total_mass!r}"
        body = np.column_stack([self.weights, self.points])
        with open(path, "w") as fh:
            fh.write(header + "\n")
            for row in body:
                fh.write(" ".join(repr(x) for x in row) + "\n")

    @classmethod
    def from_text(cls, path) -> "OneParticleDensity":
        with open(path) as fh:
            header = fh.readline().split()
            h = float(header[0])
            rows = [[float(x) for x in line.split()] for line in fh if line.strip()]
        arr = np.asarray(rows, dtype=float).reshape(-1, 7)
        return cls(arr[:, 0], arr[:, 1:], h)


def gaussian_initial_data(mass: float, sigma_v: float, sigma_r: float,
                          bandwidth: float, components: int,
                          seed: int) -> OneParticleDensity:
    """Maxwellian-in-v times Gaussian-in-r initial data with a mass knob.

    Kernel centers are drawn from narrowed Gaussians of variance
    sigma^2 - h^2 so the mollified mixture reproduces the target marginal
    variances; the mixture itself (not the ideal Gaussian) is the initial
    datum used everywhere downstream.
    """
    if not (sigma_v > bandwidth and sigma_r > bandwidth):
        raise ConfigError("initial-data sigmas must exceed the bandwidth")
    rng = np.random.default_rng(seed)
    sv = math.sqrt(sigma_v**2 - bandwidth**2)
    sr = math.sqrt(sigma_r**2 - bandwidth**2)
    centers = np.concatenate([
        rng.normal(scale=sv, size=(components, 3)),
        rng.normal(scale=sr, size=(components, 3)),
    ], axis=1)
    weights = np.full(components, mass / components)
    return OneParticleDensity(weights, centers, bandwidth)


def product_density(d: OneParticleDensity, k: int) -> PhaseFunction:
    """Product of k copies of d, one per argument slot; symmetric by construction."""
    if k < 1:
        raise ConfigError("product arity must be >= 1")

    def batch(pts):
        out = np.ones(pts.shape[0])
        for i in range(k):
            out *= d.evaluate_batch(pts[:, i, :])
        return out

    hint = d.total_mass**k if d.total_mass > 0 else None
    return PhaseFunction(k, batch, integrability_hint=hint)


@dataclass(frozen=True)
class QuadratureSpec:
    """Importance-sampling budget: sample count, proposal, seed, error mode.

    ``standard-error`` mode draws up to four batches of n_samples, stopping
    once the standard error estimate stabilizes; ``fixed-budget`` draws
    exactly n_samples. Both are deterministic for a fixed seed.
    """

    n_samples: int = 10_000
    proposal: Optional[OneParticleDensity] = None
    seed: int = 0
    error_mode: str = "standard-error"

    def __post_init__(self):
        if self.n_samples < 100:
            raise ConfigError("n_samples must be >= 100 for reported statistics")
        if self.error_mode not in ("standard-error", "fixed-budget"):
            raise ConfigError(f"unknown error_mode {self.error_mode!r}")


@dataclass(frozen=True)
class L1Report:
    """Monte Carlo L1-norm estimate with its standard error."""

    value: float
    std_error: float
    n_samples: int
    unreliable: bool = False

    def __post_init__(self):
        if self.std_error < 0.0:
            raise ConfigError("std_error must be >= 0")


def _batched_estimate(draw_values, n_samples, error_mode):
    """Accumulate batches of (value/weight) samples; returns (mean, se, n)."""
    vals = draw_values(n_samples)
    n_batches = 1
    while error_mode == "standard-error" and n_batches < 4:
        se_prev = vals.std(ddof=1) / math.sqrt(len(vals))
        more = draw_values(n_samples)
        vals = np.concatenate([vals, more])
        n_batches += 1
        se = vals.std(ddof=1) / math.sqrt(len(vals))
        if se_prev > 0 and abs(se - se_prev) < 0.02 * se_prev:
            break
    mean = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(len(vals)))
    unreliable = False
    total = np.abs(vals).sum()
    if total > 0 and np.abs(vals).max() > 0.1 * total:
        unreliable = True
    return mean, se, len(vals), unreliable


def mc_integrate(f: PhaseFunction, fixed_points, q: QuadratureSpec,
                 extra_arity: Optional[int] = None):
    """Integral of f over its trailing arguments, the leading ones held fixed.

    f has arity k + m; fixed_points supplies the k leading arguments (or is
    None/empty for k = 0) and the integral runs over the remaining m. Returns
    (value, std_error) from importance sampling against q.proposal.
    """
    if q.proposal is None:
        raise QuadratureError("mc_integrate needs a proposal density")
    proposal = q.proposal
    if fixed_points is None:
        fixed = np.zeros((0, 6))
    else:
        fixed = np.asarray(fixed_points, dtype=float).reshape(-1, 6)
    k = fixed.shape[0]
    m = f.arity - k if extra_arity is None else extra_arity
    if m < 0 or k + m != f.arity:
        raise ConfigError("fixed points and extra arity must add up to f.arity")
    if m == 0:
        return f(fixed), 0.0
    rng = np.random.default_rng(q.seed)

    def draw_values(n):
        extras = proposal.sample(rng, n * m).reshape(n, m, 6)
        pdf = np.ones(n)
        for j in range(m):
            pdf *= proposal.normalized_pdf_batch(extras[:, j, :])
        if (pdf <= 0.0).any():
            raise QuadratureError("proposal has zero mass at sampled points")
        full = np.concatenate(
            [np.broadcast_to(fixed, (n, k, 6)), extras], axis=1)
        return f.eval_batch(np.ascontiguousarray(full)) / pdf

    mean, se, n, _ = _batched_estimate(draw_values, q.n_samples, q.error_mode)
    return mean, se


def l1_norm(target, q: QuadratureSpec) -> L1Report:
    """L1 norm: exact total mass for a density, Monte Carlo otherwise."""
    if isinstance(target, OneParticleDensity):
        return L1Report(target.total_mass, 0.0, 0)
    if not isinstance(target, PhaseFunction):
        raise ConfigError("l1_norm expects a density or a PhaseFunction")
    if q.proposal is None:
        raise QuadratureError("l1_norm of a PhaseFunction needs a proposal")
    proposal = q.proposal
    m = target.arity
    rng = np.random.default_rng(q.seed)

    def draw_values(n):
        pts = proposal.sample(rng, n * m).reshape(n, m, 6)
        pdf = np.ones(n)
        for j in range(m):
            pdf *= proposal.normalized_pdf_batch(pts[:, j, :])
        if (pdf <= 0.0).any():
            raise QuadratureError("proposal has zero mass at sampled points")
        return np.abs(target.eval_batch(np.ascontiguousarray(pts))) / pdf

    mean, se, n, unreliable = _batched_estimate(draw_values, q.n_samples,
                                                q.error_mode)
    return L1Report(mean, se, n, unreliable)
