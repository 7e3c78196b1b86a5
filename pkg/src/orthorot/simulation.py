"""Monte Carlo study of rotation criteria on progressively perturbed loadings.

A base loading matrix with three orthogonal row clusters is perturbed entry by
entry in 27 stages, following one of two schedules. At every stage the global
optimum (and every stationary point) of each criterion is enumerated, the
gradient projection result is computed from the identity, and simplicity
metrics, distances and second-order classification counts are recorded.

Randomness
----------
All draws come from Philox generators keyed through ``numpy.random.SeedSequence``
spawn keys, so every stream is addressed by a tuple and does not depend on
execution order:

* ``(replicate,)`` gives the base perturbation ``U``, shared by both
  schedules, all stages and all criteria of a replicate.
* ``(replicate, schedule, stage, row)`` gives the redraws for a row whose
  communality leaves ``[0, 1]`` at that stage.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .classifier import INDETERMINATE, MAX, MIN, classify_point
from .criterion import OrthomaxSpec
from .gpa import GpaOptions, gpa_rotate
from .homotopy import SolverOptions, solve_all
from .polysys import build_stationarity_system

log = logging.getLogger(__name__)

N_STAGES = 27
RESAMPLE_BUDGET = 10**6
ENGINES = ("solver", "gpa", "both")
SCHEDULE_CODES = {"S": 0, "W": 1}

RECORD_FIELDS = (
    "schedule", "stage", "criterion", "replicate", "engine", "q_value", "perfect_rows",
    "moderate_rows", "zero_elements", "dist_global", "dist_nearest", "n_max", "n_min",
    "n_indet", "failed",
)
COUNT_FIELDS = (
    "schedule", "stage", "criterion", "replicate", "n_points", "n_classes", "raw_max", "raw_min",
    "raw_indet", "class_max", "class_min", "class_indet", "continuum",
)


class ResampleBudgetError(RuntimeError):
    pass


@dataclass(frozen=True)
class PaperMatrices:
    A_printed: np.ndarray
    A_orthogonal: np.ndarray
    S: np.ndarray
    W: np.ndarray


def paper_matrices():
    bases = (
        (0.50, 0.40, 0.10),
        (0.40, -0.60, 0.40),
        (0.33, -0.24, 0.69),
    )
    scales = ((1.0, 1.1, 1.2), (1.0, 1.2, 0.6), (1.0, 1.2, 1.1))
    rows = [np.multiply(b, s) for b, ss in zip(bases, scales) for s in ss]
    printed = np.array(rows)
    orth = printed.copy()
    orth[6:, 2] *= -1.0
    S = np.array([
        [1, 4, 7], [10, 13, 16], [19, 22, 25],
        [2, 5, 8], [11, 14, 17], [20, 23, 26],
        [3, 6, 9], [12, 15, 18], [21, 24, 27],
    ])
    W = np.arange(1, 28).reshape(9, 3)
    for m in (printed, orth, S, W):
        m.setflags(write=False)
    return PaperMatrices(printed, orth, S, W)


def stream(seed, *key):
    """Counter-based generator addressed by ``(seed, key...)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(x) for x in key))
    return np.random.Generator(np.random.Philox(ss))


def perturb(a, schedule, stage, rng, u=None, row_rng=None, budget=RESAMPLE_BUDGET, return_u=False):
    """Add ``U`` to the entries whose schedule index is at most ``stage``.

    Rows whose squared norm leaves ``[0, 1]`` get their active ``U`` entries
    redrawn until it does. ``row_rng(i)`` supplies the generator for row ``i``
    (default: ``rng``). With ``return_u`` the updated ``U`` is returned too,
    so later stages can continue from the redrawn values.
    """
    a = np.asarray(a, dtype=float)
    schedule = np.asarray(schedule)
    if schedule.shape != a.shape:
        raise ValueError("schedule and loading matrix shapes differ")
    if not 1 <= stage <= schedule.size:
        raise ValueError(f"stage {stage} outside 1..{schedule.size}")
    u = rng.uniform(-1.0, 1.0, size=a.shape) if u is None else np.array(u, dtype=float)
    active = schedule <= stage
    out = a + u * active
    for i in range(a.shape[0]):
        idx = np.flatnonzero(active[i])
        if idx.size == 0:
            continue
        g = rng if row_rng is None else row_rng(i)
        tries = 0
        while out[i] @ out[i] > 1.0:
            if tries >= budget:
                raise ResampleBudgetError(f"row {i}: no admissible draw after {budget} tries")
            u[i, idx] = g.uniform(-1.0, 1.0, size=idx.size)
            out[i] = a[i] + u[i] * active[i]
            tries += 1
    return (out, u) if return_u else out


def stage_matrices(base, schedule, seed, replicate, schedule_name, stages=None):
    """Perturbed matrices for stages 1..max(stages) of one replicate.

    Redrawn entries persist into later stages. Returns ``{stage: A_stage}``.
    """
    stages = range(1, N_STAGES + 1) if stages is None else sorted(set(stages))
    code = SCHEDULE_CODES[schedule_name]
    u = stream(seed, replicate).uniform(-1.0, 1.0, size=np.shape(base))
    out = {}
    want = set(stages)
    for ell in range(1, max(stages) + 1):
        a_ell, u = perturb(
            base, schedule, ell, None, u=u,
            row_rng=lambda i, ell=ell: stream(seed, replicate, code, ell, i), return_u=True,
        )
        if ell in want:
            out[ell] = a_ell
    return out


def simplicity_metrics(lam, threshold=0.1):
    """(perfect simple rows, moderately simple rows, zero elements)."""
    small = np.abs(np.asarray(lam, dtype=float)) < threshold
    per_row = small.sum(axis=1)
    k = small.shape[1]
    return int((per_row >= k - 1).sum()), int((per_row >= 1).sum()), int(small.sum())


def orbit_distance(lam1, lam2):
    """``min ||L1 - L2 P D||_F`` over column permutations ``P`` and sign flips ``D``."""
    l1 = np.asarray(lam1, dtype=float)
    l2 = np.asarray(lam2, dtype=float)
    if l1.shape != l2.shape:
        raise ValueError("shape mismatch")
    k = l1.shape[1]
    # squared distance for matching column j of L1 with +-column c of L2
    plus = ((l1[:, :, None] - l2[:, None, :]) ** 2).sum(axis=0)
    minus = ((l1[:, :, None] + l2[:, None, :]) ** 2).sum(axis=0)
    cost = np.minimum(plus, minus)
    best = min(sum(cost[j, perm[j]] for j in range(k)) for perm in itertools.permutations(range(k)))
    return float(math.sqrt(max(best, 0.0)))


@dataclass
class SimConfig:
    base_matrix: str = "orthogonal"
    schedule: str = "S"
    stages: tuple = tuple(range(1, N_STAGES + 1))
    replicates: int = 50
    criteria: tuple = ("quartimax", "varimax", "equamax", "parsimax")
    seed: int = 0
    zero_threshold: float = 0.1
    engine: str = "both"
    threads: int = 1
    nearest_over_classes: bool = False
    solver_options: SolverOptions = None
    gpa_options: GpaOptions = None

    def __post_init__(self):
        if self.base_matrix not in ("printed", "orthogonal"):
            raise ValueError("base_matrix must be 'printed' or 'orthogonal'")
        if self.schedule not in SCHEDULE_CODES:
            raise ValueError("schedule must be 'S' or 'W'")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        self.stages = tuple(sorted(set(int(s) for s in self.stages)))
        if not self.stages or self.stages[0] < 1 or self.stages[-1] > N_STAGES:
            raise ValueError(f"stages must lie in 1..{N_STAGES}")
        if not 0.0 < self.zero_threshold < 1.0:
            raise ValueError("zero_threshold must lie in (0, 1)")
        if self.engine not in ENGINES:
            raise ValueError(f"engine must be one of {ENGINES}")

    def spec_for(self, name, p, k):
        if isinstance(name, OrthomaxSpec):
            return name
        return OrthomaxSpec.named(name, p, k)


@dataclass
class StageSummary:
    schedule: str
    stage: int
    criterion: str
    n_replicates: int
    n_failed: int
    engine_means: dict  # engine -> {"q_value", "perfect_rows", "moderate_rows", "zero_elements"}
    mean_dist_gpa_to_global: float
    mean_dist_gpa_to_nearest: float
    mean_counts: dict  # {"max", "min", "indeterminate"} raw point counts
    mean_class_counts: dict = field(default_factory=dict)

    def _primary(self):
        for eng in ("solver", "gpa"):
            if eng in self.engine_means:
                return self.engine_means[eng]
        return {}

    @property
    def mean_perfect_simple_rows(self):
        return self._primary().get("perfect_rows", float("nan"))

    @property
    def mean_moderate_rows(self):
        return self._primary().get("moderate_rows", float("nan"))

    @property
    def mean_zero_elements(self):
        return self._primary().get("zero_elements", float("nan"))


@dataclass
class SimResult:
    config: SimConfig
    records: list
    counts: list
    summaries: list


def _criterion_label(spec_or_name):
    return spec_or_name.name if isinstance(spec_or_name, OrthomaxSpec) else str(spec_or_name)


def _solver_seed(cfg, replicate, stage, crit_index):
    ss = np.random.SeedSequence(cfg.seed, spawn_key=(replicate, SCHEDULE_CODES[cfg.schedule], stage, crit_index, 7))
    return int(ss.generate_state(1)[0])


def _nan_record(base, engine):
    rec = dict(base, engine=engine, failed=1)
    for f in RECORD_FIELDS:
        rec.setdefault(f, float("nan"))
    return rec


def _run_cell(cfg, a, spec, base, solver_seed):
    """All engine records plus a classification-count row for one matrix and criterion."""
    records, counts = [], None
    thr = cfg.zero_threshold
    run_solver = cfg.engine in ("solver", "both")
    run_gpa = cfg.engine in ("gpa", "both")
    sset = None
    if run_solver:
        try:
            opts = cfg.solver_options or SolverOptions()
            opts.threads = cfg.threads
            sset = solve_all(build_stationarity_system(a, spec), solver_seed, opts, spec=spec)
            if sset.global_point is None:
                raise RuntimeError("no real stationary point found")
            labels = [classify_point(a, spec, sset.points[c[0]].T).label for c in sset.classes]
            raw = {lab: sum(len(c) for c, l in zip(sset.classes, labels) if l == lab) for lab in (MAX, MIN, INDETERMINATE)}
            cls = {lab: labels.count(lab) for lab in (MAX, MIN, INDETERMINATE)}
            g = sset.global_point
            records.append(dict(
                base, engine="solver", q_value=g.q_value, **_metrics(g.Lambda, thr),
                dist_global=float("nan"), dist_nearest=float("nan"),
                n_max=raw[MAX], n_min=raw[MIN], n_indet=raw[INDETERMINATE], failed=0,
            ))
            # best stationary point for each metric separately
            m_all = np.array([simplicity_metrics(p.Lambda, thr) for p in sset.points])
            records.append(dict(
                base, engine="stationary_best", q_value=float("nan"),
                perfect_rows=int(m_all[:, 0].max()), moderate_rows=int(m_all[:, 1].max()),
                zero_elements=int(m_all[:, 2].max()), dist_global=float("nan"), dist_nearest=float("nan"),
                n_max=float("nan"), n_min=float("nan"), n_indet=float("nan"), failed=0,
            ))
            counts = dict(
                (f, base[f]) for f in ("schedule", "stage", "criterion", "replicate"))
            counts.update(
                n_points=len(sset.points), n_classes=len(sset.classes),
                raw_max=raw[MAX], raw_min=raw[MIN], raw_indet=raw[INDETERMINATE],
                class_max=cls[MAX], class_min=cls[MIN], class_indet=cls[INDETERMINATE],
                continuum=int(sset.continuum_flag),
            )
        except Exception as exc:  # recorded, excluded from means
            log.warning("solver failed at %s: %s", base, exc)
            records.append(_nan_record(base, "solver"))
            sset = None
    if run_gpa:
        try:
            res = gpa_rotate(a, spec, None, cfg.gpa_options)
            lam = res.candidate.Lambda
            dg = dn = float("nan")
            if sset is not None:
                dg = orbit_distance(lam, sset.global_point.Lambda)
                pts = [sset.points[c[0]] for c in sset.classes] if cfg.nearest_over_classes else sset.points
                if cfg.nearest_over_classes:
                    dn = min(orbit_distance(lam, p.Lambda) for p in pts)
                else:
                    dn = min(float(np.linalg.norm(lam - p.Lambda)) for p in pts)
            records.append(dict(
                base, engine="gpa", q_value=res.candidate.q_value, **_metrics(lam, thr),
                dist_global=dg, dist_nearest=dn, n_max=float("nan"), n_min=float("nan"),
                n_indet=float("nan"), failed=0 if res.converged else 1,
            ))
        except Exception as exc:
            log.warning("gpa failed at %s: %s", base, exc)
            records.append(_nan_record(base, "gpa"))
    return records, counts


def _metrics(lam, thr):
    p, m, z = simplicity_metrics(lam, thr)
    return dict(perfect_rows=p, moderate_rows=m, zero_elements=z)


def _mean(xs):
    xs = [x for x in xs if not (isinstance(x, float) and math.isnan(x))]
    return float(np.mean(xs)) if xs else float("nan")


def summarize(records, counts):
    """Per (schedule, stage, criterion) means over non-failed replicates."""
    keyf = lambda r: (r["schedule"], r["stage"], r["criterion"])  # noqa: E731
    records = sorted(records, key=lambda r: (keyf(r), r["replicate"], r["engine"]))
    counts = sorted(counts, key=lambda r: (keyf(r), r["replicate"]))
    out = []
    for key, grp in itertools.groupby(records, key=keyf):
        grp = list(grp)
        reps = sorted({r["replicate"] for r in grp})
        ok = [r for r in grp if not r["failed"]]
        means = {}
        for eng in sorted({r["engine"] for r in grp}):
            rows = [r for r in ok if r["engine"] == eng]
            if rows:
                means[eng] = {f: _mean([r[f] for r in rows]) for f in ("q_value", "perfect_rows", "moderate_rows", "zero_elements")}
        gp = [r for r in ok if r["engine"] == "gpa"]
        c = [r for r in counts if keyf(r) == key]
        out.append(StageSummary(
            schedule=key[0], stage=key[1], criterion=key[2], n_replicates=len(reps),
            n_failed=len({r["replicate"] for r in grp if r["failed"]}),
            engine_means=means,
            mean_dist_gpa_to_global=_mean([r["dist_global"] for r in gp]),
            mean_dist_gpa_to_nearest=_mean([r["dist_nearest"] for r in gp]),
            mean_counts={"max": _mean([r["raw_max"] for r in c]), "min": _mean([r["raw_min"] for r in c]),
                         "indeterminate": _mean([r["raw_indet"] for r in c])},
            mean_class_counts={"max": _mean([r["class_max"] for r in c]), "min": _mean([r["class_min"] for r in c]),
                               "indeterminate": _mean([r["class_indet"] for r in c])},
        ))
    return out


def run_simulation(cfg, progress=None):
    mats = paper_matrices()
    base = mats.A_orthogonal if cfg.base_matrix == "orthogonal" else mats.A_printed
    sched = mats.S if cfg.schedule == "S" else mats.W
    p, k = base.shape
    specs = [cfg.spec_for(c, p, k) for c in cfg.criteria]
    records, counts = [], []
    for rep in range(cfg.replicates):
        mats_by_stage = stage_matrices(base, sched, cfg.seed, rep, cfg.schedule, cfg.stages)
        for ell in cfg.stages:
            a = mats_by_stage[ell]
            for ci, spec in enumerate(specs):
                key = dict(schedule=cfg.schedule, stage=ell, criterion=_criterion_label(spec), replicate=rep)
                recs, cnt = _run_cell(cfg, a, spec, key, _solver_seed(cfg, rep, ell, ci))
                records.extend(recs)
                if cnt is not None:
                    counts.append(cnt)
                if progress is not None:
                    progress(key)
    return SimResult(cfg, records, counts, summarize(records, counts))


def fmt_value(x):
    """12 significant digits for floats; integers verbatim; NaN as an empty cell."""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        if math.isnan(x):
            return ""
        if float(x).is_integer() and abs(x) < 1e15:
            return str(int(x))
        return f"{float(x):.12g}"
    return str(x)


def _write_csv(path, fields, rows):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(fields) + "\n")
        for r in rows:
            fh.write(",".join(fmt_value(r[f]) for f in fields) + "\n")


SUMMARY_METRICS = ("q_value", "perfect_rows", "moderate_rows", "zero_elements")
SUMMARY_ENGINES = ("solver", "gpa", "stationary_best")


def summary_fields():
    f = ["schedule", "stage", "criterion", "n_replicates", "n_failed"]
    f += [f"{e}_{m}" for e in SUMMARY_ENGINES for m in SUMMARY_METRICS]
    f += ["dist_gpa_global", "dist_gpa_nearest", "mean_max", "mean_min", "mean_indet",
          "mean_class_max", "mean_class_min", "mean_class_indet"]
    return f


def summary_rows(summaries):
    rows = []
    for s in summaries:
        r = dict(schedule=s.schedule, stage=s.stage, criterion=s.criterion,
                 n_replicates=s.n_replicates, n_failed=s.n_failed)
        for e in SUMMARY_ENGINES:
            for m in SUMMARY_METRICS:
                r[f"{e}_{m}"] = s.engine_means.get(e, {}).get(m, float("nan"))
        r.update(dist_gpa_global=s.mean_dist_gpa_to_global, dist_gpa_nearest=s.mean_dist_gpa_to_nearest,
                 mean_max=s.mean_counts["max"], mean_min=s.mean_counts["min"],
                 mean_indet=s.mean_counts["indeterminate"],
                 mean_class_max=s.mean_class_counts.get("max", float("nan")),
                 mean_class_min=s.mean_class_counts.get("min", float("nan")),
                 mean_class_indet=s.mean_class_counts.get("indeterminate", float("nan")))
        rows.append(r)
    return rows


def write_outputs(result, out_dir, prefix=""):
    """Write replicate records, classification counts and stage summaries as CSV."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    keyf = lambda r: (r["schedule"], r["stage"], r["criterion"], r["replicate"], r.get("engine", ""))  # noqa: E731
    paths = {
        "records": os.path.join(out_dir, f"{prefix}records.csv"),
        "counts": os.path.join(out_dir, f"{prefix}classification_counts.csv"),
        "summary": os.path.join(out_dir, f"{prefix}summary.csv"),
    }
    _write_csv(paths["records"], RECORD_FIELDS, sorted(result.records, key=keyf))
    _write_csv(paths["counts"], COUNT_FIELDS, sorted(result.counts, key=keyf))
    _write_csv(paths["summary"], summary_fields(), summary_rows(result.summaries))
    return paths
