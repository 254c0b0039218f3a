"""Command-line front end.

Exit codes: 0 success, 1 data or parameter error, 2 usage error.  Errors
are printed to stderr as one JSON object per line.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import dataio, gksl, lgi, montecarlo
from .errors import ComparisonError, NulgiError
from .oscillation import FlavorChannel, load_params

OUT_DIR_ENV = "NULGI_OUT_DIR"


class UsageError(Exception):
    pass


def _params(args):
    path = args.params or dataio.bundled_params_path()
    return load_params(path)


def _out_dir(args):
    out = args.out or os.environ.get(OUT_DIR_ENV)
    if not out:
        raise UsageError(f"--out DIR is required (or set {OUT_DIR_ENV})")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _emit_csv_or_file(series, out):
    if out:
        dataio.save_plotdata(series, out)
    else:
        sys.stdout.write(",".join(series.columns) + "\n")
        for row in series.rows:
            sys.stdout.write(",".join(dataio._cell(v) for v in row) + "\n")


def _triad_config(args):
    return lgi.TriadConfig(
        epsilon=args.epsilon,
        allow_self_pair=not args.no_self_pair,
        cross_group=not args.no_cross_group,
    )


def _load_data(args):
    return dataio.load_dataset(args.data, allow_unphysical_p=args.allow_unphysical_p)


def _fmt_conf(value):
    return "undefined" if value is None else f"{value:.6g}"


# ------------------------------------------------------------- commands


def cmd_predict(args):
    if args.t_min <= 0 or args.t_max < args.t_min or args.points < 1:
        raise UsageError("need 0 < --t-min <= --t-max and --points >= 1")
    params = _params(args)
    channel = FlavorChannel.parse(args.channel, args.anti)
    t = np.geomspace(args.t_min, args.t_max, args.points)
    series = dataio.survival_curve_series(params, channel, t)
    _emit_csv_or_file(series, args.out)
    return {"command": "predict", "channel": str(channel), "points": len(series.rows), "out": args.out}


def cmd_flatten(args):
    params = _params(args)
    data = _load_data(args)
    series = dataio.stairstep_series(data, params)
    _emit_csv_or_file(series, args.out)
    return {"command": "flatten", "label": data.label, "segments": len(data), "out": args.out}


def cmd_triads(args):
    data = _load_data(args)
    cfg = _triad_config(args)
    points = [(pt.t, pt.p) for pt in data.points]
    rows = []
    for tr, rel, k in lgi.k3_scatter(points, cfg, data.groups):
        rows.append((tr.i, tr.j, tr.k, data.points[tr.i].t, data.points[tr.j].t, data.points[tr.k].t, rel, k))
    series = dataio.PlotSeries("triads", ("i", "j", "k", "t_i", "t_j", "t_k", "rel_err", "k3"), tuple(rows))
    _emit_csv_or_file(series, args.out)
    violating = sum(1 for r in rows if r[-1] > 0)
    return {"command": "triads", "label": data.label, "triads": len(rows), "violating": violating, "out": args.out}


def _run(data, args, params, *, theoretical, stream):
    config = montecarlo.RunConfig(
        replications=args.replications,
        seed=args.seed,
        triad=_triad_config(args),
        clamp=args.clamp,
        theoretical=theoretical,
    )
    dist = montecarlo.run_trials(data, config, params, stream=stream, workers=args.workers)
    return config, dist


def _notes(data, config, *dists):
    notes = []
    if montecarlo.correlated_triad_counts(data, config) == 0 and all(d.mu == 0 for d in dists):
        notes.append("no correlated triads")
    if any(d.confidence is None for d in dists):
        notes.append("confidence undefined: violation counts have zero spread")
    return notes


def cmd_violation_test(args):
    out = _out_dir(args)
    data = _load_data(args)
    params = _params(args) if (args.theoretical or args.params) else None
    config, dist = _run(data, args, params, theoretical=args.theoretical, stream=montecarlo.EXPERIMENTAL_STREAM)
    notes = _notes(data, config, dist)
    report = dataio.build_report(data.label, config, dist, notes=notes)
    report["theoretical_substitution"] = bool(args.theoretical)
    dataio.save_plotdata(dataio.histogram_series(dist), out / "distribution.csv")
    dataio.save_report(report, out / "summary.json")
    if not args.json:
        for note in notes:
            print(f"notice: {note}")
        print(f"confidence: {_fmt_conf(dist.confidence)}")
    return report


def _pseudo_k3_rows(data, config, params, stream, replications):
    if config.theoretical:
        data = montecarlo.theoretical_substitute(data, params)
    rows = []
    for r in range(replications):
        rng = montecarlo.replication_rng(config.seed, r, stream)
        pseudo = montecarlo.resample(data, rng, config.clamp)
        for tr, rel, k in lgi.k3_scatter(pseudo, config.triad, data.groups):
            rows.append((r, tr, rel, k))
    return rows


def cmd_compare(args):
    out = _out_dir(args)
    data = _load_data(args)
    params = _params(args)
    cfg_e, dist_e = _run(data, args, params, theoretical=False, stream=montecarlo.EXPERIMENTAL_STREAM)
    cfg_t, dist_t = _run(data, args, params, theoretical=True, stream=montecarlo.THEORETICAL_STREAM)
    notes = _notes(data, cfg_e, dist_e, dist_t)
    try:
        ratio = montecarlo.compare(dist_e, dist_t)
    except ComparisonError as exc:
        ratio = None
        notes.append(f"no ratio: {exc}")
    report = dataio.build_report(data.label, cfg_e, dist_e, theoretical=dist_t, ratio=ratio, notes=notes)
    dataio.save_plotdata(dataio.histogram_series(dist_e), out / "distribution_experimental.csv")
    dataio.save_plotdata(dataio.histogram_series(dist_t), out / "distribution_theoretical.csv")
    dataio.save_plotdata(dataio.stairstep_series(data, params), out / "stairstep.csv")
    scatter = []
    for source, cfg, stream in (
        ("experimental", cfg_e, montecarlo.EXPERIMENTAL_STREAM),
        ("theoretical", cfg_t, montecarlo.THEORETICAL_STREAM),
    ):
        for r, tr, rel, k in _pseudo_k3_rows(data, cfg, params, stream, min(args.scatter_replications, cfg.replications)):
            scatter.append((source, r, tr.i, tr.j, tr.k, rel, k))
    dataio.save_plotdata(
        dataio.PlotSeries("k3_scatter", ("source", "replication", "i", "j", "k", "rel_err", "k3"), tuple(scatter)),
        out / "k3_scatter.csv",
    )
    dataio.save_report(report, out / "summary.json")
    if not args.json:
        for note in notes:
            print(f"notice: {note}")
        print(f"experimental confidence: {_fmt_conf(dist_e.confidence)}")
        print(f"theoretical confidence: {_fmt_conf(dist_t.confidence)}")
        print(f"ratio: {_fmt_conf(ratio)}")
    return report


def cmd_synth(args):
    params = _params(args)
    meta, channel = dataio.EXPERIMENTS[args.experiment]
    noise = dataio.NoiseModel(rel_dt=args.rel_dt, abs_dp=args.dp, perturb=not args.no_perturb)
    data = dataio.generate_synthetic(
        params,
        meta,
        args.points,
        noise,
        args.dephasing_rate,
        channel=channel,
        seed=args.seed,
        label=args.label or f"{args.experiment}-synthetic",
    )
    out = Path(args.out)
    dataio.save_dataset(data, out)
    return {"command": "synth", "label": data.label, "points": len(data), "out": str(out)}


def cmd_gksl_demo(args):
    out = _out_dir(args)
    model = gksl.load_model(args.model)
    gen = model.generator
    pvm = model.pvm
    rho0 = model.initial_state()
    times = np.linspace(0.0, args.t_max, args.points)
    maps = gksl.evolution_maps(gen, times)
    rows = []
    for t, sup in zip(times, maps):
        rho = (sup @ rho0.rho.ravel()).reshape(pvm.dim, pvm.dim)
        p_plus, _, q = gksl.measure(pvm, rho)
        leak = float(np.max(np.abs(pvm.pi_plus @ rho @ pvm.pi_minus)))
        rows.append((float(t), p_plus, q, leak, float(np.trace(rho).real)))
    dataio.save_plotdata(
        dataio.PlotSeries("gksl_curve", ("t", "p_plus", "q", "coherence", "trace"), tuple(rows)), out / "curve.csv"
    )

    probe = gksl.evolution_map(gen, args.t_max / 3 if args.t_max > 0 else 1.0)
    preserving = gksl.preserves_incoherence(probe, pvm, args.tol)
    rng = np.random.default_rng(args.seed)
    tuples = rng.uniform(0.0, args.t_max if args.t_max > 0 else 1.0, size=(args.tuples, 3))
    start = gksl.equiprobable_plus_state(pvm)
    singles = gksl.plus_probabilities(gen, pvm, start, tuples)
    totals = gksl.plus_probabilities(gen, pvm, start, tuples.sum(axis=1))
    margin = totals - singles.prod(axis=1)
    summary = {
        "command": "gksl-demo",
        "dim": pvm.dim,
        "m": pvm.m,
        "n": pvm.n,
        "preserves_incoherence": preserving,
        "inequality_min_margin": float(margin.min()),
        "inequality_holds": bool(margin.min() >= -1e-9),
        "max_trace_error": float(max(abs(r[-1] - 1.0) for r in rows)),
    }
    if pvm.m == 1 and pvm.n == 1:
        lhs = 2 * totals - 1
        rhs = np.prod(2 * singles - 1, axis=1)
        summary["two_state_equality_max_residual"] = float(np.max(np.abs(lhs - rhs)))
    dataio.save_report(summary, out / "summary.json")
    if not args.json:
        print(f"preserves incoherence: {preserving}")
        print(f"inequality min margin: {summary['inequality_min_margin']:.3g}")
    return summary


# ---------------------------------------------------------------- parser


def _add_triad_flags(p):
    p.add_argument("--epsilon", type=float, default=0.05, help="relative tolerance for t_i + t_j ~ t_k")
    p.add_argument("--no-self-pair", action="store_true", help="forbid i == j triads")
    p.add_argument("--no-cross-group", action="store_true", help="only form triads within one group")


def _add_data_flags(p):
    p.add_argument("--data", required=True, help="dataset CSV")
    p.add_argument("--allow-unphysical-p", action="store_true", help="accept survival values outside [0, 1]")


def _add_mc_flags(p):
    p.add_argument("--replications", type=int, default=montecarlo.DEFAULT_REPLICATIONS)
    p.add_argument("--seed", type=int, default=montecarlo.DEFAULT_SEED)
    p.add_argument("--clamp", choices=("none", "clip"), default="none", help="clamp resampled survivals to [0, 1]")
    p.add_argument("--workers", type=int, default=1, help="threads for replications (results do not depend on it)")


def build_parser():
    parser = argparse.ArgumentParser(prog="nulgi", description="Leggett-Garg coherence tests for neutrino oscillation")
    parser.add_argument("--json", action="store_true", help="print a machine-readable summary on stdout")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", default=argparse.SUPPRESS, help=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("predict", parents=[common], help="oscillation probability on a log grid of L/E")
    p.add_argument("--params", help="parameter file (default: bundled NuFIT normal ordering)")
    p.add_argument("--channel", default="ee", help="ee, mumu, emu, ...")
    p.add_argument("--anti", action="store_true", help="antineutrino channel")
    p.add_argument("--t-min", type=float, default=1.0, help="km/GeV")
    p.add_argument("--t-max", type=float, default=1e5, help="km/GeV")
    p.add_argument("--points", type=int, default=200)
    p.add_argument("--out", help="output CSV (default: stdout)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("flatten", parents=[common], help="bin-averaged (stair-step) prediction for a dataset")
    _add_data_flags(p)
    p.add_argument("--params")
    p.add_argument("--out", help="output CSV (default: stdout)")
    p.set_defaults(func=cmd_flatten)

    p = sub.add_parser("gksl-demo", parents=[common], help="simulate a GKSL model file and check the inequality")
    p.add_argument("--model", required=True, help="matrix description file")
    p.add_argument("--t-max", type=float, default=5.0)
    p.add_argument("--points", type=int, default=101)
    p.add_argument("--tuples", type=int, default=1000)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--seed", type=int, default=montecarlo.DEFAULT_SEED)
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_gksl_demo)

    p = sub.add_parser("triads", parents=[common], help="list correlated triads with K3")
    _add_data_flags(p)
    _add_triad_flags(p)
    p.add_argument("--out", help="output CSV (default: stdout)")
    p.set_defaults(func=cmd_triads)

    p = sub.add_parser("violation-test", parents=[common], help="pseudodata violation-count distribution")
    _add_data_flags(p)
    p.add_argument("--params")
    p.add_argument("--theoretical", action="store_true", help="replace survivals by predictions first")
    _add_triad_flags(p)
    _add_mc_flags(p)
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_violation_test)

    p = sub.add_parser("compare", parents=[common], help="experimental vs theoretical pseudodata confidences")
    _add_data_flags(p)
    p.add_argument("--params")
    _add_triad_flags(p)
    _add_mc_flags(p)
    p.add_argument("--scatter-replications", type=int, default=10, help="replications written to k3_scatter.csv")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic stand-in dataset")
    p.add_argument("--experiment", choices=sorted(dataio.EXPERIMENTS), required=True)
    p.add_argument("--params")
    p.add_argument("--points", type=int, default=20)
    p.add_argument("--rel-dt", type=float, default=0.05, help="dt as a fraction of t")
    p.add_argument("--dp", type=float, default=0.03, help="absolute survival uncertainty")
    p.add_argument("--no-perturb", action="store_true", help="keep survivals on the model curve")
    p.add_argument("--dephasing-rate", type=float, default=0.0, help="mass-basis decoherence rate per km/GeV")
    p.add_argument("--seed", type=int, default=montecarlo.DEFAULT_SEED)
    p.add_argument("--label")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_synth)
    return parser


def _error(kind, message):
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        summary = args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        _error("usage", str(exc))
        return 2
    except (NulgiError, ValueError, OSError) as exc:
        _error(type(exc).__name__, str(exc))
        return 1
    if args.json:
        sys.stdout.write(json.dumps(summary, sort_keys=True) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
