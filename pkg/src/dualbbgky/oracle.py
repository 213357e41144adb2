"""Brute-force many-particle oracle for validating series solutions.

Realizations of a grand-canonical-style ensemble carry a Poisson particle
number (truncated at a hard cap) with particles drawn i.i.d. from the
normalized mollified initial density, so the flow on the oracle side sees
exactly the one-particle distribution the series side starts from; empirical
densities then place the same kernel on the evolved particles. With intensity
equal to the initial mass, Poisson factorial moments make the expected
empirical k-ary density at time zero factorize into the product initial data
up to one observation-kernel smoothing.

For comparisons the oracle also offers a variance-reduced estimator: the
analytic free-transport baseline plus the empirical difference between
interacting and freely streamed evolutions of the same realizations. The
common noise of the shared initial draws cancels in the difference, which
makes interaction effects resolvable at desk-scale replicate counts, and for
the free potential the estimator reproduces the transport baseline exactly.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from .density import OneParticleDensity
from .dynamics import flow_map_batch
from .errors import ConfigError
from .operators import OperatorContext
from .solver import SolutionTrace


@dataclass(frozen=True)
class EnsembleConfig:
    """Sampling plan: Poisson intensity, cap, replicate count, seed, bandwidth."""

    intensity: float
    replicates: int
    n_cap: int = 24
    seed: int = 0
    bandwidth: float = 0.2

    def __post_init__(self):
        if not self.intensity > 0.0:
            raise ConfigError("ensemble intensity must be > 0")
        if self.replicates < 100:
            raise ConfigError("replicates must be >= 100 for reported statistics")
        if self.intensity > self.n_cap / 3.0:
            raise ConfigError(
                f"intensity {self.intensity} exceeds n_cap/3 = {self.n_cap / 3.0}: "
                "truncation bias guard")
        if not self.bandwidth > 0.0:
            raise ConfigError("bandwidth must be > 0")


@dataclass
class EnsembleState:
    """Sampled realizations packed as one flat particle array with offsets."""

    counts: np.ndarray        # (R,) particle count per realization
    flat: np.ndarray          # (sum counts, 6) particle points
    time: float = 0.0

    def __post_init__(self):
        self.offsets = np.concatenate([[0], np.cumsum(self.counts)])

    @property
    def replicates(self) -> int:
        return len(self.counts)

    def realization(self, i: int) -> np.ndarray:
        return self.flat[self.offsets[i]:self.offsets[i + 1]]


def sample_ensemble(f1: OneParticleDensity, cfg: EnsembleConfig) -> EnsembleState:
    """Draw realizations: Poisson counts, particles i.i.d. from normalized f1."""
    if f1.total_mass <= 0.0:
        raise ConfigError("cannot sample an ensemble from a zero-mass density")
    rng = np.random.default_rng(cfg.seed)
    counts = np.minimum(rng.poisson(cfg.intensity, size=cfg.replicates),
                        cfg.n_cap)
    total = int(counts.sum())
    flat = f1.sample(rng, total) if total else np.zeros((0, 6))
    return EnsembleState(counts.astype(np.int64), flat, time=0.0)


def evolve_ensemble(state: EnsembleState, t: float,
                    ctx: OperatorContext) -> EnsembleState:
    """Flow every realization jointly by t; realizations grouped by count."""
    if t == 0.0:
        return EnsembleState(state.counts.copy(), state.flat.copy(),
                             time=state.time)
    new_flat = state.flat.copy()
    counts = state.counts
    offsets = state.offsets
    for n in np.unique(counts):
        if n == 0:
            continue
        idx = np.nonzero(counts == n)[0]
        batch = np.stack([state.flat[offsets[i]:offsets[i] + n] for i in idx])
        flowed = flow_map_batch(ctx.potential, ctx.flow, t, batch)
        for row, i in enumerate(idx):
            new_flat[offsets[i]:offsets[i] + n] = flowed[row]
    return EnsembleState(counts.copy(), new_flat, time=state.time + t)


@dataclass
class EmpiricalDensity:
    """Replicate-averaged k-ary empirical phase density at probe points."""

    arity: int
    probes: np.ndarray               # (P, arity, 6)
    values: np.ndarray               # (P,)
    std_errors: np.ndarray           # (P,)
    n_replicates: int
    bandwidth: float
    time: float
    sparse: bool = False
    baseline: Optional[np.ndarray] = None     # analytic transport, (P,)
    delta: Optional[np.ndarray] = None        # interacting - free, (P,)
    delta_std: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    @property
    def estimator(self) -> str:
        return "control-variate" if self.baseline is not None else "raw"

    def oracle_values(self) -> np.ndarray:
        if self.baseline is not None:
            return self.baseline + self.delta
        return self.values

    def oracle_std(self) -> np.ndarray:
        if self.baseline is not None:
            return self.delta_std
        return self.std_errors

    def rows(self):
        vals = self.oracle_values()
        sig = self.oracle_std()
        return [{"t": self.time, "probe_id": p, "order": -1,
                 "value": vals[p], "std_error": sig[p], "cumulative": vals[p]}
                for p in range(len(vals))]

    def to_json_dict(self):
        out = {
            "arity": self.arity,
            "probes": self.probes.tolist(),
            "values": self.values.tolist(),
            "std_errors": self.std_errors.tolist(),
            "n_replicates": self.n_replicates,
            "bandwidth": self.bandwidth,
            "time": self.time,
            "sparse": self.sparse,
            "meta": self.meta,
        }
        if self.baseline is not None:
            out["baseline"] = self.baseline.tolist()
            out["delta"] = self.delta.tolist()
            out["delta_std"] = self.delta_std.tolist()
        return out

    @classmethod
    def from_json_dict(cls, d) -> "EmpiricalDensity":
        emp = cls(int(d["arity"]), np.asarray(d["probes"], dtype=float),
                  np.asarray(d["values"], dtype=float),
                  np.asarray(d["std_errors"], dtype=float),
                  int(d["n_replicates"]), float(d["bandwidth"]),
                  float(d["time"]), sparse=bool(d["sparse"]),
                  meta=dict(d.get("meta", {})))
        if "baseline" in d:
            emp.baseline = np.asarray(d["baseline"], dtype=float)
            emp.delta = np.asarray(d["delta"], dtype=float)
            emp.delta_std = np.asarray(d["delta_std"], dtype=float)
        return emp


def _per_replicate_sums(state: EnsembleState, k: int, probe: np.ndarray,
                        bandwidth: float) -> np.ndarray:
    """Ordered-distinct-tuple kernel sums per realization for one probe."""
    R = state.replicates
    out = np.zeros(R)
    counts = state.counts
    offsets = state.offsets
    for n in np.unique(counts):
        if n < k:
            continue
        idx = np.nonzero(counts == n)[0]
        if len(idx) == 0:
            continue
        batch = np.stack([state.flat[offsets[i]:offsets[i] + n] for i in idx])
        K = [
            _kernels.kde_matrix(batch, np.ascontiguousarray(probe[l]), bandwidth)
            for l in range(k)
        ]
        if k == 1:
            vals = K[0].sum(axis=1)
        elif k == 2:
            vals = K[0].sum(axis=1) * K[1].sum(axis=1) - (K[0] * K[1]).sum(axis=1)
        elif k == 3:
            s1, s2, s3 = (K[l].sum(axis=1) for l in range(3))
            t12 = (K[0] * K[1]).sum(axis=1)
            t13 = (K[0] * K[2]).sum(axis=1)
            t23 = (K[1] * K[2]).sum(axis=1)
            t123 = (K[0] * K[1] * K[2]).sum(axis=1)
            vals = (s1 * s2 * s3 - s1 * t23 - s2 * t13 - s3 * t12 + 2.0 * t123)
        else:
            raise ConfigError("empirical densities implemented for k <= 3")
        out[idx] = vals
    return out


def empirical_phase_density(state: EnsembleState, k: int, probes,
                            bandwidth: float) -> EmpiricalDensity:
    """Empirical k-ary density: mean over realizations of kernel products
    summed over ordered tuples of distinct particles (no symmetry factor)."""
    probes = np.asarray(probes, dtype=float).reshape(-1, k, 6)
    P = probes.shape[0]
    R = state.replicates
    values = np.zeros(P)
    errors = np.zeros(P)
    for p in range(P):
        sums = _per_replicate_sums(state, k, probes[p], bandwidth)
        values[p] = sums.mean()
        errors[p] = sums.std(ddof=1) / math.sqrt(R)
    sparse = bool((state.counts >= k).sum() == 0)
    return EmpiricalDensity(k, probes, values, errors, R, bandwidth,
                            state.time, sparse=sparse)


def _intra_pair_index(counts, offsets):
    """Flat particle indices (i, j) of every unordered pair within a realization,
    plus the realization id of each pair."""
    left, right, owner = [], [], []
    for rid, n in enumerate(counts):
        if n < 2:
            continue
        base = offsets[rid]
        for i in range(n):
            for j in range(i + 1, n):
                left.append(base + i)
                right.append(base + j)
                owner.append(rid)
    return (np.asarray(left, dtype=np.int64),
            np.asarray(right, dtype=np.int64),
            np.asarray(owner, dtype=np.int64))


def _pair_kernel_diff(ctx, t, pairs, probes, bandwidth):
    """Per-pair kernel-sum change from two-body interaction versus free
    streaming: pairs (B, 2, 6) -> (B, P)."""
    flowed = flow_map_batch(ctx.potential, ctx.flow, t, pairs)
    free = pairs.copy()
    free[:, :, 3:] += t * free[:, :, :3]
    out = np.empty((pairs.shape[0], probes.shape[0]))
    for p in range(probes.shape[0]):
        probe = np.ascontiguousarray(probes[p, 0])
        out[:, p] = (_kernels.kde_rows(flowed, probe, bandwidth)
                     - _kernels.kde_rows(free, probe, bandwidth))
    return out


def oracle_density(f1: OneParticleDensity, cfg: EnsembleConfig,
                   ctx: OperatorContext, t: float, probes,
                   control_variate: bool = True,
                   pair_reference_samples: int = 400_000) -> EmpiricalDensity:
    """One-particle empirical density at time t, optionally variance reduced.

    The control-variate estimator reports, per probe,

        (transport of f1, kernel smoothed)  [closed form]
      + two-body interaction effect        [independent pair Monte Carlo]
      + (full - free) - (pairwise two-body) empirical difference,

    where the last piece uses common random numbers: every realization is
    evolved interacting and freely streamed, and the summed two-body
    predictions over its particle pairs are subtracted. Free-streaming shot
    noise and pair-level shot noise cancel replicate by replicate, so the
    remaining fluctuations carry only three-body-and-up correlations.
    Requires the ensemble intensity to equal the mass of f1 so the baseline
    matches the series convention.
    """
    from .solver import smeared_transport_value

    probes = np.asarray(probes, dtype=float).reshape(-1, 1, 6)
    if abs(cfg.intensity - f1.total_mass) > 1e-9 * max(1.0, f1.total_mass):
        raise ConfigError("ensemble intensity must equal the initial mass")
    state0 = sample_ensemble(f1, cfg)
    state_int = evolve_ensemble(state0, t, ctx)
    emp = empirical_phase_density(state_int, 1, probes, cfg.bandwidth)
    emp.time = t
    emp.meta = _oracle_meta(f1, cfg, ctx)
    if not control_variate:
        return emp

    free_flat = state0.flat.copy()
    free_flat[:, 3:] += t * free_flat[:, :3]
    state_free = EnsembleState(state0.counts.copy(), free_flat, time=t)
    P = probes.shape[0]
    R = state0.replicates

    baseline = smeared_transport_value(f1, t, probes[:, 0, :], cfg.bandwidth)

    diff = np.empty((R, P))
    for p in range(P):
        diff[:, p] = (_per_replicate_sums(state_int, 1, probes[p], cfg.bandwidth)
                      - _per_replicate_sums(state_free, 1, probes[p], cfg.bandwidth))

    # subtract the summed two-body predictions of each realization
    li, ri, owner = _intra_pair_index(state0.counts, state0.offsets)
    if len(owner):
        pair_pts = np.stack([state0.flat[li], state0.flat[ri]], axis=1)
        pair_diff = _pair_kernel_diff(ctx, t, pair_pts, probes, cfg.bandwidth)
        for p in range(P):
            np.subtract.at(diff[:, p], owner, pair_diff[:, p])

    # independent high-precision estimate of the two-body effect
    rng = np.random.default_rng(cfg.seed + 17)
    B = pair_reference_samples
    ref_pairs = f1.sample(rng, 2 * B).reshape(B, 2, 6)
    ref_diff = _pair_kernel_diff(ctx, t, ref_pairs, probes, cfg.bandwidth)
    lam2 = 0.5 * cfg.intensity**2
    pair_term = lam2 * ref_diff.mean(axis=0)
    pair_term_std = lam2 * ref_diff.std(axis=0, ddof=1) / math.sqrt(B)

    residual = diff.mean(axis=0)
    residual_std = diff.std(axis=0, ddof=1) / math.sqrt(R)

    emp.baseline = baseline
    emp.delta = pair_term + residual
    emp.delta_std = np.sqrt(pair_term_std**2 + residual_std**2)
    return emp


def _oracle_meta(f1, cfg, ctx):
    return {
        "potential": {"kind": ctx.potential.kind,
                      "amplitude": ctx.potential.amplitude,
                      "range": ctx.potential.range},
        "step": ctx.flow.step,
        "bandwidth": cfg.bandwidth,
        "mass": f1.total_mass,
        "intensity": cfg.intensity,
        "replicates": cfg.replicates,
        "seed": cfg.seed,
    }


@dataclass
class ComparisonReport:
    """Discrepancy between a series trace and empirical densities, per order."""

    times: list
    orders: int
    per_probe: np.ndarray        # (T, P, N+1) |series_cum - oracle|
    combined_std: np.ndarray     # (T, P, N+1)
    aggregate: np.ndarray        # (T, N+1) sum over probes
    aggregate_std: np.ndarray    # (T, N+1)
    monotone: list               # per time: aggregate non-increasing in N
    final_within_3sigma: list    # per time: every probe consistent at N

    def to_dict(self):
        return {
            "times": self.times,
            "orders": self.orders,
            "per_probe": self.per_probe.tolist(),
            "combined_std": self.combined_std.tolist(),
            "aggregate": self.aggregate.tolist(),
            "aggregate_std": self.aggregate_std.tolist(),
            "monotone": self.monotone,
            "final_within_3sigma": self.final_within_3sigma,
        }


def compare_to_series(oracles, trace: SolutionTrace) -> ComparisonReport:
    """Per-probe and aggregate discrepancies between oracle and series.

    oracles is one EmpiricalDensity per trace time, built with the same
    bandwidth, probes and potential (checked hard). The discrepancy at
    truncation N uses the cumulative series value through order N.
    """
    if isinstance(oracles, EmpiricalDensity):
        oracles = [oracles]
    if len(oracles) != len(trace.times):
        raise ConfigError("need one empirical density per trace time")
    for emp, t in zip(oracles, trace.times):
        if abs(emp.time - t) > 1e-12:
            raise ConfigError("oracle/series time mismatch")
        if emp.meta and trace.meta:
            if abs(emp.meta["bandwidth"] - trace.meta["bandwidth"]) > 1e-12:
                raise ConfigError("oracle/series bandwidth mismatch")
            if emp.meta["potential"] != trace.meta["potential"]:
                raise ConfigError("oracle/series potential mismatch")
        if emp.probes.shape != trace.probes.shape or \
                not np.allclose(emp.probes, trace.probes, atol=1e-12):
            raise ConfigError("oracle/series probe mismatch")

    T = len(trace.times)
    P = trace.probes.shape[0]
    N1 = trace.values.shape[2]
    per_probe = np.zeros((T, P, N1))
    comb = np.zeros_like(per_probe)
    cum = trace.cumulative
    cum_sig = trace.cumulative_std
    for ti, emp in enumerate(oracles):
        ov = emp.oracle_values()
        os = emp.oracle_std()
        for n in range(N1):
            per_probe[ti, :, n] = np.abs(cum[ti, :, n] - ov)
            comb[ti, :, n] = np.sqrt(cum_sig[ti, :, n]**2 + os**2)
    aggregate = per_probe.sum(axis=1)
    aggregate_std = np.sqrt((comb**2).sum(axis=1))
    slack = 1e-12 * np.maximum(aggregate.max(axis=1), 1e-300)
    monotone = [bool(np.all(np.diff(aggregate[ti]) <= slack[ti]))
                for ti in range(T)]
    final_ok = [bool(np.all(per_probe[ti, :, -1] <= 3.0 * comb[ti, :, -1] + 1e-15))
                for ti in range(T)]
    return ComparisonReport(list(trace.times), N1 - 1, per_probe, comb,
                            aggregate, aggregate_std, monotone, final_ok)
