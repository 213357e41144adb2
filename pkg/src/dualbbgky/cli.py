"""Command-line harness: config dispatch, artifact outputs, reproducibility.

Subcommands: identities | solve | functional | oracle | compare | residual |
print-config. Exit codes: 0 pass, 1 check failure, 2 config error,
3 runtime/quadrature failure. Every output file embeds the resolved config;
``--no-timestamp`` suppresses the one non-reproducible header line so that
identical config and seed give byte-identical files.
"""

import argparse
import csv
import datetime
import functools
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .config import RunConfig
from .cumulants import (ClusterIndexSet, cumulant_operator, expansion_operator,
                        generator_check, partition_identity_sum)
from .density import QuadratureSpec, l1_norm, product_density
from .dynamics import PotentialSpec
from .errors import ConfigError, OrderCapError, QuadratureError, StepBudgetError
from .operators import OperatorContext, PhaseFunction, backward_flow_operator
from .oracle import EmpiricalDensity, compare_to_series, oracle_density
from .solver import (SolutionTrace, convergence_report, kinetic_residual,
                     marginal_functional, series_term_l1, solve_series,
                     solve_series_cell, transport_residual)


def _timestamp_line(enabled: bool):
    if not enabled:
        return None
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def write_csv(path, rows, config_json, timestamp=None,
              fields=("t", "probe_id", "order", "value", "std_error",
                      "cumulative")):
    with open(path, "w", newline="") as fh:
        fh.write(f"# config: {config_json}\n")
        if timestamp:
            fh.write(f"# generated: {timestamp}\n")
        writer = csv.writer(fh)
        writer.writerow(fields)
        for row in rows:
            writer.writerow([repr(row[f]) if isinstance(row[f], float)
                             else row[f] for f in fields])


def write_json(path, payload, config_json, timestamp=None):
    doc = {"config": json.loads(config_json)}
    if timestamp:
        doc["generated"] = timestamp
    doc.update(payload)
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# identities suite
# ---------------------------------------------------------------------------

def _smooth_test_function(arity, rng):
    centers = rng.normal(scale=0.8, size=(arity, 6))
    widths = 0.6 + 0.4 * rng.random(size=arity)

    def batch(pts):
        out = np.ones(pts.shape[0])
        for i in range(arity):
            d = pts[:, i, :] - centers[i]
            out *= np.exp(-0.5 * (d * d).sum(axis=1) / widths[i] ** 2)
        return out

    return PhaseFunction(arity, batch)


def run_identities(cfg: RunConfig):
    """The full identity suite; returns a list of JSON-ready records."""
    ctx = cfg.context()
    free_ctx = OperatorContext(PotentialSpec("free"), cfg.flow())
    initial = cfg.initial_density()
    quad = cfg.quadrature()
    overrides = cfg.data["identities"]["tolerance_overrides"]
    records = []

    def record(identity, parameters, value, tolerance, passed):
        tolerance = overrides.get(identity, tolerance)
        if isinstance(value, float):
            passed = abs(value) <= tolerance
        records.append({"identity": identity, "parameters": parameters,
                        "value": value, "tolerance": tolerance,
                        "pass": bool(passed)})

    sums = [partition_identity_sum(m) for m in range(1, 9)]
    record("partition_identity_sums", {"m": "1..8"}, sums, 0,
           sums == [1] + [0] * 7)

    rng = np.random.default_rng(12345)
    for n in (1, 2, 3):
        worst = 0.0
        for _ in range(4):
            f = _smooth_test_function(2 + n, rng)
            pts = rng.normal(scale=0.7, size=(2 + n, 6))
            ground = ClusterIndexSet(2, n)
            op = cumulant_operator(ctx, 0.0, ground.elements(), f)
            worst = max(worst, abs(op(pts)))
        record("cumulant_t0_cancellation", {"n": n, "k": 2}, worst, 1e-12,
               None)

    # integrated cancellation of the cluster-free cumulant over two extras
    t = 0.1
    elements = [(1,), (2,)]
    g3 = product_density(initial, 3)
    op = cumulant_operator(ctx, t, elements, g3)
    rng2 = np.random.default_rng(quad.seed)
    B = quad.n_samples
    pts = initial.sample(rng2, 3 * B).reshape(B, 3, 6)
    pdf = np.ones(B)
    for j in range(3):
        pdf *= initial.normalized_pdf_batch(pts[:, j, :])
    vals = op.eval_batch(np.ascontiguousarray(pts)) / pdf
    est = vals.mean()
    sig = vals.std(ddof=1) / math.sqrt(B)
    record("integrated_cumulant_cancellation", {"n": 2, "t": t},
           float(est), 3.0 * sig, None)

    # isometry of the backward flow in the L1 norm
    f2 = product_density(initial, 2)
    pulled = backward_flow_operator(ctx, t, f2)
    q = QuadratureSpec(quad.n_samples, proposal=initial, seed=quad.seed + 1,
                       error_mode=quad.error_mode)
    rep = l1_norm(pulled, q)
    exact = initial.total_mass**2
    record("flow_isometry", {"k": 2, "t": t}, float(rep.value - exact),
           3.0 * rep.std_error, None)

    # free-potential collapse of the expansion operators
    for n in (1, 2):
        f = _smooth_test_function(1 + n, rng)
        op = expansion_operator(free_ctx, 0.2, n, 1, f)
        worst = max(abs(op(rng.normal(scale=0.7, size=(1 + n, 6))))
                    for _ in range(3))
        record("expansion_free_collapse", {"n": n, "k": 1}, worst, 1e-12,
               None)

    # short-time generators
    f = _gaussian_all_variables(2)
    pts = np.array([[0.3, -0.2, 0.1, 0.4, 0.0, -0.3],
                    [-0.1, 0.2, 0.0, -0.2, 0.3, 0.1]])
    rep0 = generator_check(ctx, 0, 2, f, pts)
    record("generator_bracket", {"n": 0, "k": 2},
           float(rep0.estimate - rep0.reference), 1e-3, None)
    f1 = _gaussian_all_variables(3)
    pts1 = np.array([[0.3, -0.2, 0.1, 0.4, 0.0, -0.3],
                     [-0.1, 0.2, 0.0, -0.2, 0.3, 0.1],
                     [0.2, 0.1, -0.2, 0.1, -0.1, 0.2]])
    rep1 = generator_check(ctx, 1, 2, f1, pts1)
    record("generator_vanishing", {"n": 1, "k": 2}, float(rep1.estimate),
           1e-3, None)

    return records


def _gaussian_all_variables(arity):
    def batch(pts):
        flat = pts.reshape(pts.shape[0], -1)
        return np.exp(-0.5 * (flat * flat).sum(axis=1))
    return PhaseFunction(arity, batch)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_print_config(cfg, args):
    print(json.dumps(cfg.data, sort_keys=True, indent=2))
    return 0


def cmd_identities(cfg, args):
    records = run_identities(cfg)
    out = _outdir(cfg, args)
    write_json(os.path.join(out, "identities.json"), {"identities": records},
               cfg.to_json(), _timestamp_line(not args.no_timestamp))
    failed = [r for r in records if not r["pass"]]
    for r in records:
        status = "pass" if r["pass"] else "FAIL"
        print(f"{status}  {r['identity']} {r['parameters']} -> {r['value']}")
    if failed:
        print(f"{len(failed)} identity check(s) failed: "
              + ", ".join(r["identity"] for r in failed))
        return 1
    return 0


@functools.lru_cache(maxsize=4)
def _worker_setup(cfg_json):
    cfg = RunConfig(json.loads(cfg_json))
    return cfg.initial_density(), cfg.series(), cfg.context()


def _solve_cell_task(cfg_json, ti, n):
    initial, series, ctx = _worker_setup(cfg_json)
    vals, errs = solve_series_cell(initial, series, ctx, ti, n)
    return ti, n, vals, errs


def cmd_solve(cfg, args):
    initial = cfg.initial_density()
    series = cfg.series()
    ctx = cfg.context()
    if args.workers > 1:
        probes = series.probe_array()
        N = series.truncation_order
        values = np.zeros((len(series.times), probes.shape[0], N + 1))
        errors = np.zeros_like(values)
        tasks = [(ti, n) for ti in range(len(series.times))
                 for n in range(N + 1)]
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            futures = [pool.submit(_solve_cell_task, cfg.to_json(), ti, n)
                       for ti, n in tasks]
            for fut in futures:
                ti, n, vals, errs = fut.result()
                values[ti, :, n] = vals
                errors[ti, :, n] = errs
        from .solver import _trace_meta
        trace = SolutionTrace(series.arity, series.times, probes, values,
                              errors, initial.total_mass,
                              _trace_meta(initial, series, ctx))
    else:
        trace = solve_series(initial, series, ctx)

    norms = []
    for n in range(series.truncation_order + 1):
        quad = QuadratureSpec(series.quadrature.n_samples, proposal=initial,
                              seed=series.quadrature.seed)
        val, err = series_term_l1(initial, series.arity, n, series.times[-1],
                                  ctx, quad)
        norms.append({"order": n, "l1": val, "std_error": err})
    report = convergence_report(initial, series.arity,
                                orders=series.truncation_order,
                                term_norms=norms)

    out = _outdir(cfg, args)
    stamp = _timestamp_line(not args.no_timestamp)
    write_csv(os.path.join(out, "solve.csv"), trace.rows(), cfg.to_json(),
              stamp)
    write_json(os.path.join(out, "solve.json"),
               {"trace": trace.to_json_dict(),
                "convergence": report.to_dict()},
               cfg.to_json(), stamp)
    print(f"initial L1 norm {report.initial_norm:.6g}; "
          f"theorem threshold {report.theorem_threshold:.6e}; "
          f"in_regime={report.in_regime}")
    if not report.in_regime:
        print("WARNING: initial norm above the global-solution threshold; "
              "series is truncated extrapolation, not certified convergent")
    print("order  term_l1        majorant")
    for n, row in enumerate(norms):
        print(f"{n:>5}  {row['l1']:<13.6g}  {report.term_majorants[n]:.6g}")
    return 0


def cmd_functional(cfg, args):
    series = cfg.series()
    if series.arity < 2:
        raise ConfigError("functional command needs series.arity >= 2")
    initial = cfg.initial_density()
    ctx = cfg.context()
    out = _outdir(cfg, args)
    stamp = _timestamp_line(not args.no_timestamp)
    payload = []
    rows = []
    for t in series.times:
        res = marginal_functional(series.arity, t, initial, series, ctx,
                                  probes=series.probe_array())
        payload.append({
            "t": t, "in_regime": res.in_regime,
            "renormalized": res.renormalized,
            "values": res.values.tolist(),
            "std_errors": res.std_errors.tolist(),
        })
        cum = res.cumulative
        for p in range(res.values.shape[0]):
            for n in range(res.values.shape[1]):
                rows.append({"t": t, "probe_id": p, "order": n,
                             "value": res.values[p, n],
                             "std_error": res.std_errors[p, n],
                             "cumulative": cum[p, n]})
    write_json(os.path.join(out, "functional.json"),
               {"functional": payload}, cfg.to_json(), stamp)
    write_csv(os.path.join(out, "functional.csv"), rows, cfg.to_json(), stamp)
    return 0


def cmd_oracle(cfg, args):
    initial = cfg.initial_density()
    series = cfg.series()
    if series.arity != 1:
        raise ConfigError("the oracle comparison pipeline runs at arity 1")
    ens = cfg.ensemble()
    ctx = cfg.context()
    probes = series.probe_array()
    out = _outdir(cfg, args)
    stamp = _timestamp_line(not args.no_timestamp)
    densities = []
    rows = []
    for t in series.times:
        emp = oracle_density(initial, ens, ctx, t, probes)
        densities.append(emp.to_json_dict())
        rows.extend(emp.rows())
    write_json(os.path.join(out, "oracle.json"), {"oracle": densities},
               cfg.to_json(), stamp)
    write_csv(os.path.join(out, "oracle.csv"), rows, cfg.to_json(), stamp)
    return 0


def cmd_compare(cfg, args):
    out = _outdir(cfg, args)
    solve_path = os.path.join(out, "solve.json")
    oracle_path = os.path.join(out, "oracle.json")
    for p in (solve_path, oracle_path):
        if not os.path.exists(p):
            raise ConfigError(f"compare needs {p}; run solve and oracle first")
    with open(solve_path) as fh:
        trace = SolutionTrace.from_json_dict(json.load(fh)["trace"])
    with open(oracle_path) as fh:
        oracles = [EmpiricalDensity.from_json_dict(d)
                   for d in json.load(fh)["oracle"]]
    report = compare_to_series(oracles, trace)
    stamp = _timestamp_line(not args.no_timestamp)
    write_json(os.path.join(out, "compare.json"),
               {"comparison": report.to_dict()}, cfg.to_json(), stamp)
    rows = []
    for ti, t in enumerate(report.times):
        for n in range(report.per_probe.shape[2]):
            for p in range(report.per_probe.shape[1]):
                rows.append({"t": t, "probe_id": p, "order": n,
                             "value": report.per_probe[ti, p, n],
                             "std_error": report.combined_std[ti, p, n],
                             "cumulative": report.aggregate[ti, n]})
    write_csv(os.path.join(out, "compare.csv"), rows, cfg.to_json(), stamp)
    ok = all(report.monotone) and all(report.final_within_3sigma)
    for ti, t in enumerate(report.times):
        print(f"t={t}: aggregate discrepancy by order "
              f"{[f'{a:.4g}' for a in report.aggregate[ti]]} "
              f"monotone={report.monotone[ti]} "
              f"final_3sigma={report.final_within_3sigma[ti]}")
    return 0 if ok else 1


def cmd_residual(cfg, args):
    from dataclasses import replace
    initial = cfg.initial_density()
    ctx = cfg.context()
    series = cfg.series()
    r = cfg.data["residual"]
    dt = float(r["dt"])
    center = float(r["center_time"])
    grid = [center + dt * i for i in range(-2, 3)]
    series = replace(series, arity=1, times=tuple(grid), time_crn=True)
    trace = solve_series(initial, series, ctx)
    report = kinetic_residual(initial, trace, series, ctx,
                              dr=float(r["dr"]), dv=float(r["dv"]))

    # order-of-accuracy table for the pure transport stencil
    slope_rows = []
    probe = series.probe_array()[1, 0]
    for dt_probe in (dt, dt / 2, dt / 4):
        res = transport_residual(initial, center, dt_probe, probe)
        slope_rows.append({"dt": dt_probe, "residual": res})
    slopes = [math.log2(abs(slope_rows[i]["residual"]) /
                        abs(slope_rows[i + 1]["residual"]))
              for i in range(len(slope_rows) - 1)
              if slope_rows[i + 1]["residual"] != 0.0]

    out = _outdir(cfg, args)
    stamp = _timestamp_line(not args.no_timestamp)
    payload = {
        "times": report.times,
        "residuals": report.residuals.tolist(),
        "error_bars": report.error_bars.tolist(),
        "fd_time_bound": report.fd_time_bound.tolist(),
        "transport_stencil": slope_rows,
        "transport_slopes": slopes,
    }
    write_json(os.path.join(out, "residual.json"), {"residual": payload},
               cfg.to_json(), stamp)
    rows = []
    for ti, t in enumerate(report.times):
        for p in report.probe_ids:
            rows.append({"t": t, "probe_id": p, "order": -1,
                         "value": report.residuals[ti, p],
                         "std_error": report.error_bars[ti, p],
                         "cumulative": report.fd_time_bound[ti, p]})
    write_csv(os.path.join(out, "residual.csv"), rows, cfg.to_json(), stamp)
    bars = 3.0 * report.error_bars + report.fd_time_bound
    ok = bool(np.all(np.abs(report.residuals) <= bars))
    print(f"max |residual| = {np.abs(report.residuals).max():.4g}; "
          f"within bars: {ok}")
    return 0 if ok else 1


def _outdir(cfg, args):
    out = args.out or cfg.data["output"]["directory"]
    os.makedirs(out, exist_ok=True)
    return out


COMMANDS = {
    "identities": cmd_identities,
    "solve": cmd_solve,
    "functional": cmd_functional,
    "oracle": cmd_oracle,
    "compare": cmd_compare,
    "residual": cmd_residual,
    "print-config": cmd_print_config,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="dualbbgky",
        description="Cumulant-series hierarchy solver and ensemble oracle")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", default=None, help="JSON config path")
    parser.add_argument("--seed", type=int, default=None,
                        help="override every RNG seed block")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--workers", type=int, default=1,
                        help="cap on concurrent series cells")
    parser.add_argument("--no-timestamp", action="store_true",
                        help="omit the timestamp header for byte-stable output")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
        if args.seed is not None:
            cfg.override_seed(args.seed)
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, OrderCapError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (QuadratureError, StepBudgetError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
