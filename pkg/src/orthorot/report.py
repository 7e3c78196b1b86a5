"""File I/O, JSON result documents, run manifests and SVG line charts."""

import csv
import hashlib
import io
import json
import math
import os
import platform
from xml.sax.saxutils import escape

import numpy as np

SCHEMA_VERSION = 1

# blue, red, green, purple first so four criteria match the usual figure colors
PALETTE = ("#1f4eb4", "#d62728", "#2ca02c", "#8e44ad", "#ff7f0e", "#17becf", "#7f7f7f", "#bcbd22")


class MatrixFileError(ValueError):
    pass


def _is_number(s):
    try:
        float(s)
    except ValueError:
        return False
    return True


def read_matrix(path):
    """Read a rectangular matrix from CSV (optional header row) or JSON.

    Returns ``(matrix, header)`` where ``header`` is a list of column names or
    ``None``.
    """
    if str(path).lower().endswith(".json"):
        with open(path) as fh:
            doc = json.load(fh)
        header = None
        if isinstance(doc, dict):
            header = doc.get("header")
            doc = doc.get("matrix")
        rows = doc
    else:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
        header = None
        if rows and not all(_is_number(c) for c in rows[0]):
            header, rows = [c.strip() for c in rows[0]], rows[1:]
    if not isinstance(rows, list) or not rows or any(not isinstance(r, list) for r in rows) \
            or len({len(r) for r in rows}) != 1 or not rows[0]:
        raise MatrixFileError(f"{path}: matrix must be rectangular and non-empty")
    try:
        m = np.array([[float(c) for c in r] for r in rows], dtype=float)
    except (TypeError, ValueError) as exc:
        raise MatrixFileError(f"{path}: non-numeric cell ({exc})") from None
    if not np.all(np.isfinite(m)):
        raise MatrixFileError(f"{path}: non-finite entries")
    if header is not None and len(header) != m.shape[1]:
        raise MatrixFileError(f"{path}: header has {len(header)} names for {m.shape[1]} columns")
    return m, header


def fmt17(x):
    return f"{float(x):.17g}"


def write_matrix(path, m, header=None):
    m = np.asarray(m, dtype=float)
    if str(path).lower().endswith(".json"):
        doc = {"matrix": m.tolist()}
        if header is not None:
            doc["header"] = list(header)
        with open(path, "w") as fh:
            json.dump(doc, fh)
            fh.write("\n")
        return
    with open(path, "w", newline="") as fh:
        if header is not None:
            fh.write(",".join(header) + "\n")
        for row in m:
            fh.write(",".join(fmt17(x) for x in row) + "\n")


def _clean(obj):
    """Make numpy values JSON-serializable; non-finite floats become null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def dumps(doc):
    return json.dumps(_clean(doc), indent=2, sort_keys=True) + "\n"


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def build_manifest(argv, seed, tolerances, inputs=(), outputs=(), backend=None, extra=None):
    """Run manifest. Contains no wall-clock data unless ``SOURCE_DATE_EPOCH`` is set,
    so replaying a command reproduces the manifest byte for byte."""
    from . import __version__

    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    doc = {
        "schema_version": SCHEMA_VERSION,
        "command": list(argv),
        "seed": seed,
        "tolerances": dict(tolerances),
        "versions": {
            "orthorot": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "kernel_backend": backend,
        },
        "timestamps": {"source_date_epoch": int(epoch) if epoch and epoch.isdigit() else None},
        "inputs": {str(p): sha256_file(p) for p in inputs},
        "outputs": {os.path.basename(p): sha256_file(p) for p in sorted(outputs)},
    }
    if extra:
        doc.update(extra)
    return doc


def _nice_ticks(lo, hi, n=6):
    if not math.isfinite(lo) or not math.isfinite(hi):
        lo, hi = 0.0, 1.0
    if hi <= lo:
        pad = abs(lo) * 0.1 or 1.0
        lo, hi = lo - pad, hi + pad
    raw = (hi - lo) / max(n - 1, 1)
    mag = 10 ** math.floor(math.log10(raw))
    step = next(s * mag for s in (1, 2, 2.5, 5, 10) if s * mag >= raw)
    start = math.floor(lo / step) * step
    stop = math.ceil(hi / step) * step
    count = int(round((stop - start) / step))
    return [start + i * step for i in range(count + 1)]


def _tick_label(x):
    s = f"{x:.6g}"
    return "0" if s in ("-0", "0") else s


def emit_svg_lines(series, x_label, y_label, path=None, title=None):
    """Line chart with one polyline per series.

    ``series`` is a sequence of ``(label, xs, ys)``; NaN points are skipped.
    Writes to ``path`` when given and returns the SVG text either way.
    """
    if not series:
        raise ValueError("no series to plot")
    W, H = 800, 500
    left, right, top, bottom = 70, 170, 40, 60
    pw, ph = W - left - right, H - top - bottom
    xs_all = [float(x) for _, xs, ys in series for x, y in zip(xs, ys) if math.isfinite(float(y))]
    ys_all = [float(y) for _, xs, ys in series for y in ys if math.isfinite(float(y))]
    xt = _nice_ticks(min(xs_all, default=0.0), max(xs_all, default=1.0))
    yt = _nice_ticks(min(ys_all, default=0.0), max(ys_all, default=1.0))
    x0, x1, y0, y1 = xt[0], xt[-1], yt[0], yt[-1]

    def sx(x):
        return left + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return top + ph - (y - y0) / (y1 - y0) * ph

    out = io.StringIO()
    w = out.write
    w('<?xml version="1.0" encoding="UTF-8"?>\n')
    w(f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">\n')
    w(f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>\n')
    if title:
        w(f'<text x="{left + pw / 2:.2f}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{escape(title)}</text>\n')
    w('<g stroke="#dddddd" stroke-width="1">\n')
    for t in yt:
        w(f'<line x1="{left}" y1="{sy(t):.2f}" x2="{left + pw}" y2="{sy(t):.2f}"/>\n')
    w("</g>\n")
    w(f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black" stroke-width="1"/>\n')
    w('<g font-family="sans-serif" font-size="12">\n')
    for t in xt:
        w(f'<line x1="{sx(t):.2f}" y1="{top + ph}" x2="{sx(t):.2f}" y2="{top + ph + 5}" stroke="black"/>\n')
        w(f'<text x="{sx(t):.2f}" y="{top + ph + 20}" text-anchor="middle">{_tick_label(t)}</text>\n')
    for t in yt:
        w(f'<line x1="{left - 5}" y1="{sy(t):.2f}" x2="{left}" y2="{sy(t):.2f}" stroke="black"/>\n')
        w(f'<text x="{left - 8}" y="{sy(t) + 4:.2f}" text-anchor="end">{_tick_label(t)}</text>\n')
    w(f'<text x="{left + pw / 2:.2f}" y="{H - 15}" text-anchor="middle">{escape(x_label)}</text>\n')
    w(f'<text x="18" y="{top + ph / 2:.2f}" text-anchor="middle" transform="rotate(-90 18 {top + ph / 2:.2f})">{escape(y_label)}</text>\n')
    w("</g>\n")
    for idx, (label, xs, ys) in enumerate(series):
        color = PALETTE[idx % len(PALETTE)]
        pts = " ".join(f"{sx(float(x)):.2f},{sy(float(y)):.2f}" for x, y in zip(xs, ys) if math.isfinite(float(y)))
        w(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{pts}"/>\n')
    w('<g font-family="sans-serif" font-size="12">\n')
    for idx, (label, _, _) in enumerate(series):
        color = PALETTE[idx % len(PALETTE)]
        ly = top + 10 + 20 * idx
        lx = left + pw + 15
        w(f'<line x1="{lx}" y1="{ly}" x2="{lx + 25}" y2="{ly}" stroke="{color}" stroke-width="2"/>\n')
        w(f'<text x="{lx + 32}" y="{ly + 4}">{escape(str(label))}</text>\n')
    w("</g>\n</svg>\n")
    text = out.getvalue()
    if path is not None:
        with open(path, "w", newline="\n") as fh:
            fh.write(text)
    return text


FIGURES = (
    # (file stem, summary column template, y label)
    ("perfect_rows", "{engine}_perfect_rows", "mean perfect simple rows"),
    ("moderate_rows", "{engine}_moderate_rows", "mean moderately simple rows"),
    ("zero_elements", "{engine}_zero_elements", "mean zero elements"),
)


def read_summary_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _col(rows, name):
    out = []
    for r in rows:
        v = r.get(name, "")
        out.append(float(v) if v not in ("", None) else float("nan"))
    return out


def figures_from_summary(rows, out_dir):
    """Write the figure set for every schedule in a summary table; returns paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    schedules = sorted({r["schedule"] for r in rows})
    crits = []
    for r in rows:
        if r["criterion"] not in crits:
            crits.append(r["criterion"])

    def series(sched, col):
        out = []
        for c in crits:
            sub = sorted((r for r in rows if r["schedule"] == sched and r["criterion"] == c), key=lambda r: int(r["stage"]))
            if sub:
                out.append((c, [int(r["stage"]) for r in sub], _col(sub, col)))
        return out

    for sched in schedules:
        for stem, tmpl, ylab in FIGURES:
            for engine in ("gpa", "solver", "stationary_best"):
                s = series(sched, tmpl.format(engine=engine))
                if not any(math.isfinite(y) for _, _, ys in s for y in ys):
                    continue
                p = os.path.join(out_dir, f"fig_{stem}_{engine}_{sched}.svg")
                emit_svg_lines(s, "stage", ylab, p, title=f"{engine} ({sched})")
                paths.append(p)
        for col, stem, ylab in (("dist_gpa_global", "dist_global", "mean distance GPA to global optimum"),
                                ("dist_gpa_nearest", "dist_nearest", "mean distance GPA to nearest stationary point")):
            s = series(sched, col)
            if any(math.isfinite(y) for _, _, ys in s for y in ys):
                p = os.path.join(out_dir, f"fig_{stem}_{sched}.svg")
                emit_svg_lines(s, "stage", ylab, p, title=f"distances ({sched})")
                paths.append(p)
        for col, lab in (("mean_max", "max"), ("mean_min", "min"), ("mean_indet", "indeterminate")):
            s = series(sched, col)
            if any(math.isfinite(y) for _, _, ys in s for y in ys):
                p = os.path.join(out_dir, f"fig_count_{lab}_{sched}.svg")
                emit_svg_lines(s, "stage", f"mean number of {lab} points", p, title=f"classification ({sched})")
                paths.append(p)
    return paths
