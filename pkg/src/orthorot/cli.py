"""Command line interface: ``orthorot <subcommand> [options]``.

Exit status is 0 on success, 1 on a runtime failure and 2 on a usage error.
"""

import argparse
import logging
import os
import sys

import numpy as np

from . import report
from .classifier import NotStationaryError, classify_point
from .criterion import NAMED_CRITERIA, OrthomaxSpec, make_candidate, orthomax_gradient, orthomax_value
from .gpa import GpaOptions, gpa_rotate
from .homotopy import BACKEND, SolverOptions, canonicalize, solve_all
from .polysys import build_stationarity_system
from .simulation import SimConfig, paper_matrices, run_simulation, write_outputs
from .structure import diagnose_pss, identity_stationarity_residual, pss_rotation, thurstone_report

log = logging.getLogger("orthorot")


class UsageError(Exception):
    pass


def _parse_stages(text):
    """``a..b``, ``a`` or a comma list such as ``1,3,5..7``."""
    out = []
    try:
        for part in text.split(","):
            part = part.strip()
            if ".." in part:
                a, b = part.split("..")
                out.extend(range(int(a), int(b) + 1))
            elif part:
                out.append(int(part))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad stage range {text!r}") from None
    if not out or min(out) < 1 or max(out) > 27:
        raise argparse.ArgumentTypeError("stages must lie in 1..27")
    return tuple(sorted(set(out)))


def _default_threads():
    try:
        return max(1, int(os.environ.get("ORTHOROT_THREADS", "1")))
    except ValueError:
        return 1


def _common(parser, matrix=True, criterion=True):
    if matrix:
        g = parser.add_mutually_exclusive_group()
        g.add_argument("--matrix", metavar="FILE", help="loading matrix (CSV or JSON)")
        g.add_argument("--paper-matrix", choices=("printed", "orthogonal"), help="built-in 9x3 study matrix")
    if criterion:
        g = parser.add_mutually_exclusive_group()
        g.add_argument("--criterion", choices=NAMED_CRITERIA, help="named orthomax member (default varimax)")
        g.add_argument("--omega", type=float, metavar="R", help="orthomax weight")
    parser.add_argument("--seed", type=int, default=0, metavar="N")
    parser.add_argument("--threads", type=int, default=_default_threads(), metavar="N")
    parser.add_argument("--out", metavar="DIR", help="write results (and a manifest) into DIR")
    parser.add_argument("--tol-feas", type=float, default=1e-8, metavar="R")
    parser.add_argument("--tol-stat", type=float, default=1e-8, metavar="R")
    parser.add_argument("--tol-dedup", type=float, default=1e-6, metavar="R")
    parser.add_argument("--tol-rank", type=float, default=1e-8, metavar="R")
    parser.add_argument("--tol-end", type=float, default=1e-10, metavar="R")
    parser.add_argument("--tol-imag", type=float, default=1e-8, metavar="R")
    parser.add_argument("--tol-stop", type=float, default=1e-8, metavar="R", help="GPA stopping tolerance")
    parser.add_argument("--tol-zero", type=float, default=0.1, metavar="R", help="display threshold for zero loadings")
    parser.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    p = argparse.ArgumentParser(prog="orthorot", description="Orthomax rotation by enumeration of stationary points.")
    sub = p.add_subparsers(dest="command", required=True)

    for name, help_ in (("value", "criterion value of A T"), ("gradient", "gradient of the criterion in T")):
        s = sub.add_parser(name, help=help_)
        _common(s)
        s.add_argument("--rotation", metavar="FILE", help="rotation T (default identity)")

    s = sub.add_parser("gpa", help="gradient projection rotation")
    _common(s)
    s.add_argument("--rotation", metavar="FILE", help="starting rotation (default identity)")
    s.add_argument("--max-iter", type=int, default=5000)

    for name, help_ in (("enumerate", "all stationary rotations and the global optimum"),
                        ("classify", "second-order labels of all stationary classes")):
        s = sub.add_parser(name, help=help_)
        _common(s)
        s.add_argument("--dump-paths", metavar="FILE", help="per-path diagnostics as JSON")
        s.add_argument("--backend", choices=("compiled", "python"), default=None)

    s = sub.add_parser("pss-check", help="perfect simple structure test and rotation")
    _common(s, criterion=False)

    s = sub.add_parser("thurstone-check", help="Thurstone zero-pattern class of a loading matrix")
    _common(s, criterion=False)
    s.add_argument("--rotation", metavar="FILE", help="report on A T instead of A")
    s.add_argument("--gamma", type=int, default=0)
    s.add_argument("--delta", type=int, default=0)

    s = sub.add_parser("identity-stationarity", help="antisymmetric gradient residuals at T = I")
    _common(s)

    s = sub.add_parser("simulate", help="Monte Carlo study on the built-in matrices")
    _common(s, matrix=False, criterion=False)
    s.add_argument("--paper-matrix", choices=("printed", "orthogonal"), default="orthogonal")
    s.add_argument("--schedule", choices=("S", "W"), action="append", help="repeatable; default both")
    s.add_argument("--stages", type=_parse_stages, default=tuple(range(1, 28)), metavar="a..b")
    s.add_argument("--replicates", type=int, default=50, metavar="N")
    s.add_argument("--engine", choices=("solver", "gpa", "both"), default="both")
    s.add_argument("--criterion", choices=NAMED_CRITERIA, action="append", help="repeatable; default all four")
    s.add_argument("--nearest-over-classes", action="store_true",
                   help="nearest-point distance over orbit classes instead of raw points")

    s = sub.add_parser("plot", help="SVG figures from stage summary CSV files")
    s.add_argument("--summary", metavar="FILE", action="append", required=True)
    s.add_argument("--out", metavar="DIR", required=True)
    s.add_argument("-v", "--verbose", action="store_true")
    return p


def _load_matrix(args):
    if getattr(args, "matrix", None):
        a, header = report.read_matrix(args.matrix)
        return a, {"matrix_file": args.matrix, "header": header}
    if getattr(args, "paper_matrix", None):
        m = paper_matrices()
        a = m.A_printed if args.paper_matrix == "printed" else m.A_orthogonal
        return np.array(a), {"paper_matrix": args.paper_matrix}
    raise UsageError("one of --matrix or --paper-matrix is required")


def _spec(args, a):
    p, k = a.shape
    if getattr(args, "omega", None) is not None:
        return OrthomaxSpec(args.omega, p, k, "omega")
    return OrthomaxSpec.named(getattr(args, "criterion", None) or "varimax", p, k)


def _spec_doc(spec):
    return {"name": spec.name, "omega": spec.omega, "p": spec.p, "k": spec.k}


def _tolerances(args):
    return {k[4:].replace("_", "-"): v for k, v in sorted(vars(args).items()) if k.startswith("tol_")}


def _load_rotation(args, k):
    if getattr(args, "rotation", None):
        t, _ = report.read_matrix(args.rotation)
        if t.shape != (k, k):
            raise UsageError(f"rotation must be {k}x{k}, got {t.shape[0]}x{t.shape[1]}")
        return t
    return np.eye(k)


def _solver_opts(args):
    return SolverOptions(
        tol_end=args.tol_end, imag_tol=args.tol_imag, feas_tol=args.tol_feas, stat_tol=args.tol_stat,
        dedup_tol=args.tol_dedup, rank_tol=args.tol_rank, threads=args.threads,
        backend=getattr(args, "backend", None),
    )


def _point_doc(p, label=None):
    return {
        "T": p.T, "lambda": p.Lambda, "q": p.q_value, "label": label,
        "residuals": {"orthogonality": p.orth_residual, "stationarity": p.stat_residual},
    }


def _emit(args, doc, name, argv, inputs=(), extra_outputs=()):
    text = report.dumps(doc)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, name)
        with open(path, "w") as fh:
            fh.write(text)
        outputs = [path, *extra_outputs]
        man = report.build_manifest(argv, getattr(args, "seed", None), _tolerances(args), inputs, outputs, BACKEND)
        with open(os.path.join(args.out, "manifest.json"), "w") as fh:
            fh.write(report.dumps(man))
    sys.stdout.write(text)


def _inputs(args):
    return [args.matrix] if getattr(args, "matrix", None) else []


def cmd_value(args, argv):
    a, src = _load_matrix(args)
    spec = _spec(args, a)
    t = _load_rotation(args, a.shape[1])
    doc = {"schema_version": report.SCHEMA_VERSION, "input": src, "spec": _spec_doc(spec),
           "T": t, "q": orthomax_value(a @ t, spec)}
    _emit(args, doc, "value.json", argv, _inputs(args))


def cmd_gradient(args, argv):
    a, src = _load_matrix(args)
    spec = _spec(args, a)
    t = _load_rotation(args, a.shape[1])
    doc = {"schema_version": report.SCHEMA_VERSION, "input": src, "spec": _spec_doc(spec),
           "T": t, "gradient": orthomax_gradient(a, t, spec)}
    _emit(args, doc, "gradient.json", argv, _inputs(args))


def cmd_gpa(args, argv):
    a, src = _load_matrix(args)
    spec = _spec(args, a)
    t0 = _load_rotation(args, a.shape[1])
    res = gpa_rotate(a, spec, t0, GpaOptions(tol_stop=args.tol_stop, max_iter=args.max_iter))
    doc = {"schema_version": report.SCHEMA_VERSION, "input": src, "spec": _spec_doc(spec),
           "result": _point_doc(res.candidate), "iterations": res.iterations,
           "converged": res.converged, "stalled": res.stalled}
    _emit(args, doc, "gpa.json", argv, _inputs(args))
    return 0


def _enumerate(args):
    a, src = _load_matrix(args)
    spec = _spec(args, a)
    sset = solve_all(build_stationarity_system(a, spec), args.seed, _solver_opts(args), spec=spec)
    if args.dump_paths:
        sset.dump_paths(args.dump_paths)
    classified = []
    for members in sset.classes:
        try:
            classified.append(classify_point(a, spec, sset.points[members[0]].T))
        except NotStationaryError as exc:
            log.warning("class skipped by classifier: %s", exc)
            classified.append(None)
    return a, src, spec, sset, classified


def _label(c):
    return c.label if c is not None else "indeterminate"


def cmd_enumerate(args, argv):
    a, src, spec, sset, classified = _enumerate(args)
    labels = {}
    for c, members in zip(classified, sset.classes):
        for i in members:
            labels[i] = _label(c)
    g = sset.global_class
    doc = {
        "schema_version": report.SCHEMA_VERSION, "input": src, "spec": _spec_doc(spec),
        "points": [_point_doc(p, labels.get(i)) for i, p in enumerate(sset.points)],
        "classes": [{"members": m, "q": sset.points[m[0]].q_value, "label": _label(c),
                     "canonical_T": canonicalize(sset.points[m[0]].T, a)}
                    for m, c in zip(sset.classes, classified)],
        "global_class": g,
        "global_optimum": None if g is None else _point_doc(sset.global_point, _label(classified[g])),
        "continuum_flag": sset.continuum_flag,
        "continuum_points": [_point_doc(p) for p in sset.continuum_points],
        "n_paths_tracked": sset.n_paths_tracked, "n_real": sset.n_real,
        "path_status": sset.status_counts(),
    }
    extra = [args.dump_paths] if args.dump_paths and args.out and os.path.dirname(os.path.abspath(args.dump_paths)) == os.path.abspath(args.out) else []
    _emit(args, doc, "enumerate.json", argv, _inputs(args), extra)


def cmd_classify(args, argv):
    a, src, spec, sset, classified = _enumerate(args)
    rows = []
    for m, c in zip(sset.classes, classified):
        p = sset.points[m[0]]
        rows.append({
            "size": len(m), "q": p.q_value, "label": _label(c),
            "canonical_T": canonicalize(p.T, a),
            "multipliers": None if c is None else c.multipliers,
            "multiplier_residual": None if c is None else c.multiplier_residual,
            "determinant_trail": [] if c is None else [[b, d] for b, d in c.determinant_trail],
            "variable_order": [] if c is None else list(c.variable_order),
        })
    counts = {lab: sum(1 for r in rows if r["label"] == lab) for lab in ("max", "min", "indeterminate")}
    raw = {lab: sum(r["size"] for r in rows if r["label"] == lab) for lab in ("max", "min", "indeterminate")}
    doc = {"schema_version": report.SCHEMA_VERSION, "input": src, "spec": _spec_doc(spec),
           "classes": rows, "class_counts": counts, "point_counts": raw,
           "continuum_flag": sset.continuum_flag}
    _emit(args, doc, "classify.json", argv, _inputs(args))


def cmd_pss_check(args, argv):
    a, src = _load_matrix(args)
    d = diagnose_pss(a)
    doc = {"schema_version": report.SCHEMA_VERSION, "input": src,
           "status": "SUCCESS" if d.ok else "FAILURE",
           "n_clusters": d.n_clusters, "k": d.k,
           "violations": [{"clusters": [v.cluster_a + 1, v.cluster_b + 1], "rows": [v.row_a + 1, v.row_b + 1],
                           "dot": round(v.dot, 12), "cosine": v.cosine} for v in d.violations]}
    if d.ok:
        t = pss_rotation(a, d.partition)
        doc["assignments"] = [None if c is None else c + 1 for c in d.partition.assignments]
        doc["T"] = t
        doc["lambda"] = a @ t
    else:
        for v in d.violations:
            sys.stderr.write(f"FAILURE: clusters {v.cluster_a + 1} and {v.cluster_b + 1} not orthogonal, dot = {v.dot:.3f}\n")
        if d.n_clusters > d.k:
            sys.stderr.write(f"FAILURE: {d.n_clusters} clusters exceed k = {d.k}\n")
    _emit(args, doc, "pss_check.json", argv, _inputs(args))


def cmd_thurstone(args, argv):
    a, src = _load_matrix(args)
    t = _load_rotation(args, a.shape[1])
    lam = a @ t
    r = thurstone_report(lam, args.tol_zero)
    doc = {"schema_version": report.SCHEMA_VERSION, "input": src, "zero_tol": args.tol_zero,
           "gamma": r.gamma, "delta": r.delta, "rule1_ok": r.rule1_ok, "rule2_ok": r.rule2_ok,
           "per_pair": [{"pair": [u + 1, v + 1], "zero_in_exactly_one": c[0], "zero_in_both": c[1]}
                        for (u, v), c in sorted(r.per_pair_counts.items())],
           "satisfies_class": r.satisfies_class(args.gamma, args.delta, a.shape[1]),
           "requested_class": [args.gamma, args.delta]}
    _emit(args, doc, "thurstone_check.json", argv, _inputs(args))


def cmd_identity(args, argv):
    a, src = _load_matrix(args)
    spec = _spec(args, a)
    k = a.shape[1]
    pairs = [{"pair": [u + 1, v + 1], "residual": identity_stationarity_residual(a, spec, u, v)}
             for u in range(k) for v in range(u + 1, k)]
    cand = make_candidate(a, np.eye(k), spec)
    doc = {"schema_version": report.SCHEMA_VERSION, "input": src, "spec": _spec_doc(spec),
           "pairs": pairs, "identity_stationary": all(abs(p["residual"]) < args.tol_stat for p in pairs),
           "stationarity_residual": cand.stat_residual}
    _emit(args, doc, "identity_stationarity.json", argv, _inputs(args))


def cmd_simulate(args, argv):
    if not args.out:
        raise UsageError("simulate requires --out DIR")
    schedules = args.schedule or ["S", "W"]
    crits = tuple(args.criterion or NAMED_CRITERIA)
    os.makedirs(args.out, exist_ok=True)
    outputs = []
    all_summary = []
    for sched in sorted(set(schedules)):
        cfg = SimConfig(
            base_matrix=args.paper_matrix, schedule=sched, stages=args.stages, replicates=args.replicates,
            criteria=crits, seed=args.seed, zero_threshold=args.tol_zero, engine=args.engine,
            threads=args.threads, nearest_over_classes=args.nearest_over_classes,
            solver_options=_solver_opts(args), gpa_options=GpaOptions(tol_stop=args.tol_stop),
        )
        res = run_simulation(cfg, progress=lambda key: log.info("done %s", key))
        paths = write_outputs(res, args.out, prefix=f"{sched}_")
        outputs.extend(paths.values())
        all_summary.extend(report.read_summary_csv(paths["summary"]))
    outputs.extend(report.figures_from_summary(all_summary, args.out))
    man = report.build_manifest(argv, args.seed, _tolerances(args), [], outputs, BACKEND,
                                extra={"config": {"schedules": sorted(set(schedules)), "stages": list(args.stages),
                                                  "replicates": args.replicates, "engine": args.engine,
                                                  "criteria": list(crits), "paper_matrix": args.paper_matrix}})
    with open(os.path.join(args.out, "manifest.json"), "w") as fh:
        fh.write(report.dumps(man))
    sys.stdout.write(report.dumps({"schema_version": report.SCHEMA_VERSION,
                                   "outputs": sorted(os.path.basename(p) for p in outputs)}))


def cmd_plot(args, argv):
    rows = []
    for path in args.summary:
        rows.extend(report.read_summary_csv(path))
    paths = report.figures_from_summary(rows, args.out)
    sys.stdout.write(report.dumps({"schema_version": report.SCHEMA_VERSION,
                                   "outputs": sorted(os.path.basename(p) for p in paths)}))


COMMANDS = {
    "value": cmd_value, "gradient": cmd_gradient, "gpa": cmd_gpa, "enumerate": cmd_enumerate,
    "classify": cmd_classify, "pss-check": cmd_pss_check, "thurstone-check": cmd_thurstone,
    "identity-stationarity": cmd_identity, "simulate": cmd_simulate, "plot": cmd_plot,
}


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args, argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        sys.stderr.write(f"orthorot {args.command}: error: {exc}\n")
        return 2
    except (report.MatrixFileError, FileNotFoundError, ValueError) as exc:
        sys.stderr.write(f"orthorot {args.command}: {exc}\n")
        return 1
    except Exception as exc:  # runtime failure
        log.debug("failure", exc_info=True)
        sys.stderr.write(f"orthorot {args.command}: {type(exc).__name__}: {exc}\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
