"""Benchmark harness: MAE +- SD, Pearson correlation and report files."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np
from scipy import stats

from .errors import DataError, ValidationError
from .pipeline import PipelineConfig, process_clip
from .spectra import WindowPlan
from .synth import GroundTruth, load_manifest
from .vidio import atomic_write_text, read_clip


class EmptyPoolError(DataError):
    """No (estimate, reference) pair survived gating and absence filtering."""


def _pairs(estimates, reference):
    est = np.array([np.nan if v is None else v for v in estimates], dtype=np.float64)
    ref = np.array([np.nan if v is None else v for v in reference], dtype=np.float64)
    if est.shape != ref.shape:
        raise ValidationError(f"series lengths differ: {est.size} vs {ref.size}")
    keep = np.isfinite(est) & np.isfinite(ref)
    return est[keep], ref[keep]


def mae_sd(estimates, reference) -> tuple[float, float]:
    """Mean and population standard deviation of |estimate - reference|.

    ``None`` or NaN entries (gated or absent windows) drop the pair.
    """
    est, ref = _pairs(estimates, reference)
    if est.size == 0:
        raise EmptyPoolError("no estimate/reference pairs left after dropping gated or absent windows")
    err = np.abs(est - ref)
    return float(err.mean()), float(err.std())


def pearson(x, y) -> tuple[float, float]:
    """Sample Pearson r and the two-sided p-value from the t statistic (n - 2 dof)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValidationError("pearson needs two 1-D series of equal length")
    n = x.size
    if n < 3:
        raise ValidationError(f"pearson needs at least 3 pairs, got {n}")
    xc, yc = x - x.mean(), y - y.mean()
    sxx, syy = float(xc @ xc), float(yc @ yc)
    if sxx == 0 or syy == 0:
        raise DataError("correlation undefined: a series has zero variance")
    r = float(xc @ yc) / math.sqrt(sxx * syy)
    r = max(-1.0, min(1.0, r))
    if abs(r) == 1.0:
        return r, 0.0
    t = r * math.sqrt((n - 2) / (1 - r * r))
    p = float(2 * stats.t.sf(abs(t), n - 2))
    return r, min(max(p, 0.0), 1.0)


@dataclass
class ClipResult:
    id: str
    condition: dict
    t_center_s: list
    hr_est: list
    rr_est: list
    hr_ref: list
    rr_ref: list
    gated: list
    records: list = field(default_factory=list)
    error: str | None = None

    def stats(self, which: str):
        try:
            return mae_sd(getattr(self, f"{which}_est"), getattr(self, f"{which}_ref"))
        except EmptyPoolError:
            return None, None


@dataclass
class EvalReport:
    rows: list
    overall: dict
    groups: dict
    correlations: dict
    gated_fraction: float
    errors: list

    def to_dict(self) -> dict:
        return {
            "per_subject": self.rows,
            "overall": self.overall,
            "groups": self.groups,
            "correlations": self.correlations,
            "gated_fraction": self.gated_fraction,
            "errors": self.errors,
        }

    def to_json(self) -> str:
        return json.dumps(_round(self.to_dict()), indent=1, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        cols = ["id", "covered", "blur_radius", "posture_deg", "hr_mae", "hr_sd", "rr_mae", "rr_sd",
                "n_windows", "n_gated"]
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in self.rows:
            c = r["condition"]
            w.writerow([r["id"], c.get("covered"), c.get("blur_radius"), c.get("posture_deg")]
                       + [_fmt(r[k]) for k in cols[4:]])
        w.writerow(["overall", "", "", "", _fmt(self.overall["hr_mae"]), _fmt(self.overall["hr_sd"]),
                    _fmt(self.overall["rr_mae"]), _fmt(self.overall["rr_sd"]),
                    self.overall["n_windows"], self.overall["n_gated"]])
        return buf.getvalue()

    def summary(self) -> str:
        return (f"overall HR MAE {_fmt(self.overall['hr_mae'])} bpm, "
                f"RR MAE {_fmt(self.overall['rr_mae'])} bpm, "
                f"gated fraction {self.gated_fraction:.3f}")


def _fmt(v):
    return "" if v is None else (f"{v:.3f}" if isinstance(v, float) else str(v))


def _round(obj):
    if isinstance(obj, float):
        return None if not math.isfinite(obj) else round(obj, 9)
    if isinstance(obj, dict):
        return {k: _round(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round(v) for v in obj]
    return obj


def align_reference(truth: GroundTruth, t_center_s) -> tuple[np.ndarray, np.ndarray]:
    """Reference rates linearly interpolated to the estimate window centres."""
    t = np.asarray(t_center_s, dtype=np.float64)
    return np.interp(t, truth.t_s, truth.hr_bpm), np.interp(t, truth.t_s, truth.rr_bpm)


def truth_injection_records(truth: GroundTruth, plan: WindowPlan) -> list[dict]:
    """Estimates equal to the reference; exercises the harness without the pipeline."""
    n = plan.count(truth.n_frames)
    centres = (plan.starts(truth.n_frames) + plan.window_len / 2) / truth.fps
    hr, rr = align_reference(truth, centres)
    return [
        {"window_index": i, "t_center_s": float(centres[i]), "hr_bpm": float(hr[i]),
         "rr_bpm": float(rr[i]), "hr_quality_db": 0.0, "rr_quality_db": 0.0, "gated": False,
         "motion_intensity": 0.0}
        for i in range(n)
    ]


def evaluate_clip(entry: dict, cfg: PipelineConfig, truth_injection: bool = False,
                  records: list | None = None) -> ClipResult:
    """Run (or take) the per-window records of one manifest entry and pair them with truth."""
    cid = entry.get("label") or Path(entry["clip"]).stem
    cond = dict(entry.get("condition", {}))
    try:
        truth = GroundTruth.load(entry["truth"])
    except FileNotFoundError as exc:
        return ClipResult(cid, cond, [], [], [], [], [], [], error=f"missing truth file: {exc.filename}")
    if records is None:
        if truth_injection:
            plan = cfg.plan(truth.fps)
            records = truth_injection_records(truth, plan)
        else:
            try:
                clip = read_clip(entry["clip"])
            except FileNotFoundError as exc:
                return ClipResult(cid, cond, [], [], [], [], [], [], error=f"missing clip file: {exc.filename}")
            records = [e.record() for e in process_clip(clip, cfg)]
    t = [r["t_center_s"] for r in records]
    hr_ref, rr_ref = align_reference(truth, t)
    return ClipResult(
        cid, cond, t,
        [r.get("hr_bpm") for r in records],
        [r.get("rr_bpm") for r in records],
        hr_ref.tolist(), rr_ref.tolist(),
        [bool(r["gated"]) for r in records],
        records,
    )


def worker_count(default: int | None = None) -> int:
    cap = os.environ.get("BLURVITALS_THREADS")
    n = default or os.cpu_count() or 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError as exc:
            raise ValidationError(f"BLURVITALS_THREADS must be an integer, got {cap!r}") from exc
    return max(1, n)


def _pool_stats(results, which):
    est = [v for r in results for v in getattr(r, f"{which}_est")]
    ref = [v for r in results for v in getattr(r, f"{which}_ref")]
    try:
        return mae_sd(est, ref)
    except EmptyPoolError:
        return None, None


def _group_key(cond: dict) -> str:
    focus = "clear" if not cond.get("blur_radius") else "blurry"
    cover = "covered" if cond.get("covered") else "uncovered"
    return f"{focus}-{cover}"


def build_report(results: list[ClipResult]) -> EvalReport:
    ok = [r for r in results if r.error is None]
    rows = []
    for r in ok:
        hm, hs = r.stats("hr")
        rm, rs = r.stats("rr")
        rows.append({
            "id": r.id, "condition": r.condition, "hr_mae": hm, "hr_sd": hs, "rr_mae": rm, "rr_sd": rs,
            "n_windows": len(r.gated), "n_gated": int(sum(r.gated)),
            "pairs": {"hr_est": r.hr_est, "hr_ref": r.hr_ref, "rr_est": r.rr_est, "rr_ref": r.rr_ref},
        })
    hm, hs = _pool_stats(ok, "hr")
    rm, rs = _pool_stats(ok, "rr")
    n_win = sum(len(r.gated) for r in ok)
    n_gated = sum(sum(r.gated) for r in ok)
    overall = {"hr_mae": hm, "hr_sd": hs, "rr_mae": rm, "rr_sd": rs, "n_windows": n_win, "n_gated": n_gated}

    buckets: dict[str, list] = {}
    for r in ok:
        c = r.condition
        keys = [_group_key(c), "clear" if not c.get("blur_radius") else "blurry",
                "covered" if c.get("covered") else "uncovered"]
        if c.get("blur_radius") is not None:
            keys.append(f"blur{float(c['blur_radius']):g}")
        if c.get("posture_deg") is not None:
            keys.append(f"posture{float(c['posture_deg']):g}")
        for k in keys:
            buckets.setdefault(k, []).append(r)
    groups = {}
    for k in sorted(buckets):
        gh = _pool_stats(buckets[k], "hr")
        gr = _pool_stats(buckets[k], "rr")
        groups[k] = {"hr_mae": gh[0], "hr_sd": gh[1], "rr_mae": gr[0], "rr_sd": gr[1],
                     "clips": [r.id for r in buckets[k]]}

    correlations = {}
    for which in ("hr", "rr"):
        est, ref = _pairs([v for r in ok for v in getattr(r, f"{which}_est")],
                          [v for r in ok for v in getattr(r, f"{which}_ref")])
        try:
            rv, pv = pearson(est, ref)
        except (DataError, ValidationError):
            rv = pv = None
        correlations[f"{which}_r"] = rv
        correlations[f"{which}_p"] = pv
    errors = [{"id": r.id, "error": r.error} for r in results if r.error is not None]
    return EvalReport(rows, overall, groups, correlations, n_gated / n_win if n_win else 0.0, errors)


def run_benchmark(manifest, cfg: PipelineConfig = PipelineConfig(), truth_injection: bool = False,
                  workers: int | None = None) -> EvalReport:
    """Evaluate every clip of a manifest (path or loaded entries).

    Clips run in parallel; the report is assembled in manifest order, so the
    result does not depend on completion order.
    """
    entries = load_manifest(manifest) if isinstance(manifest, (str, Path)) else list(manifest)
    n = worker_count(workers)
    if n == 1:
        results = [evaluate_clip(e, cfg, truth_injection) for e in entries]
    else:
        with ThreadPoolExecutor(n) as ex:
            results = list(ex.map(lambda e: evaluate_clip(e, cfg, truth_injection), entries))
    return build_report(results)


def write_report(report: EvalReport, out_dir, stem: str = "report", emit_svg: bool = False) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = [out_dir / f"{stem}.json", out_dir / f"{stem}.csv"]
    atomic_write_text(paths[0], report.to_json())
    atomic_write_text(paths[1], report.to_csv())
    if emit_svg:
        box, scatter = out_dir / f"{stem}_boxplot.svg", out_dir / f"{stem}_scatter.svg"
        atomic_write_text(box, boxplot_svg(report))
        atomic_write_text(scatter, scatter_svg(report))
        paths += [box, scatter]
    return paths


# SVG emission: per-condition boxplots of per-clip MAE, estimate-vs-reference scatter

def _svg(width, height, body: list[str]) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">')
    return "\n".join([head, '<rect width="100%" height="100%" fill="white"/>', *body, "</svg>"]) + "\n"


def _quartiles(values):
    v = np.sort(np.asarray(values, dtype=float))
    return [float(np.percentile(v, q)) for q in (0, 25, 50, 75, 100)]


def boxplot_data(report: EvalReport) -> dict:
    """Per-group five-number summaries of per-clip MAE, keyed 'hr'/'rr' then group."""
    out = {"hr": {}, "rr": {}}
    for which in ("hr", "rr"):
        groups: dict[str, list] = {}
        for r in report.rows:
            if r[f"{which}_mae"] is not None:
                groups.setdefault(_group_key(r["condition"]), []).append(r[f"{which}_mae"])
        out[which] = {k: _quartiles(v) for k, v in sorted(groups.items())}
    return out


def boxplot_svg(report: EvalReport) -> str:
    data = boxplot_data(report)
    w, h, pad = 640, 320, 40
    body = []
    panels = [("hr", "HR MAE (bpm)"), ("rr", "RR MAE (bpm)")]
    pw = (w - 3 * pad) / 2
    for pi, (which, title) in enumerate(panels):
        x0 = pad + pi * (pw + pad)
        groups = data[which]
        top = max([q[4] for q in groups.values()] + [1.0])
        sy = lambda v: h - pad - (h - 2 * pad) * v / top  # noqa: E731
        body.append(f'<text x="{x0:.1f}" y="{pad / 2:.1f}" font-size="12">{escape(title)}</text>')
        body.append(f'<line x1="{x0:.1f}" y1="{h - pad}" x2="{x0 + pw:.1f}" y2="{h - pad}" stroke="black"/>')
        n = max(len(groups), 1)
        for gi, (name, q) in enumerate(groups.items()):
            cx = x0 + (gi + 0.5) * pw / n
            bw = 0.5 * pw / n
            body.append(f'<line x1="{cx:.1f}" y1="{sy(q[0]):.1f}" x2="{cx:.1f}" y2="{sy(q[4]):.1f}" stroke="black"/>')
            body.append(f'<rect x="{cx - bw / 2:.1f}" y="{sy(q[3]):.1f}" width="{bw:.1f}" '
                        f'height="{max(sy(q[1]) - sy(q[3]), 0.5):.1f}" fill="#9ecae1" stroke="black"/>')
            body.append(f'<line x1="{cx - bw / 2:.1f}" y1="{sy(q[2]):.1f}" x2="{cx + bw / 2:.1f}" '
                        f'y2="{sy(q[2]):.1f}" stroke="black" stroke-width="2"/>')
            body.append(f'<text x="{cx:.1f}" y="{h - pad / 2:.1f}" font-size="9" '
                        f'text-anchor="middle">{escape(name)}</text>')
    return _svg(w, h, body)


def scatter_data(report: EvalReport, which: str) -> dict:
    est, ref = [], []
    for r in report.rows:
        e, f = _pairs(r["pairs"][f"{which}_est"], r["pairs"][f"{which}_ref"])
        est += e.tolist()
        ref += f.tolist()
    fit = None
    if len(ref) >= 2 and np.ptp(ref) > 0:
        slope, intercept = np.polyfit(ref, est, 1)
        fit = {"slope": float(slope), "intercept": float(intercept)}
    return {"reference": ref, "estimate": est, "fit": fit}


def scatter_svg(report: EvalReport) -> str:
    w, h, pad = 640, 320, 40
    pw = (w - 3 * pad) / 2
    body = []
    for pi, which in enumerate(("hr", "rr")):
        d = scatter_data(report, which)
        x0 = pad + pi * (pw + pad)
        vals = d["reference"] + d["estimate"]
        lo, hi = (min(vals), max(vals)) if vals else (0.0, 1.0)
        if hi - lo < 1e-9:
            lo, hi = lo - 1, hi + 1
        sx = lambda v: x0 + pw * (v - lo) / (hi - lo)  # noqa: E731
        sy = lambda v: h - pad - (h - 2 * pad) * (v - lo) / (hi - lo)  # noqa: E731
        body.append(f'<text x="{x0:.1f}" y="{pad / 2:.1f}" font-size="12">{which.upper()} estimate vs reference (bpm)</text>')
        body.append(f'<rect x="{x0:.1f}" y="{pad}" width="{pw:.1f}" height="{h - 2 * pad}" fill="none" stroke="black"/>')
        for rx, ey in zip(d["reference"], d["estimate"]):
            body.append(f'<circle cx="{sx(rx):.2f}" cy="{sy(ey):.2f}" r="2" fill="#3182bd"/>')
        if d["fit"]:
            a, b = d["fit"]["slope"], d["fit"]["intercept"]
            body.append(f'<line x1="{sx(lo):.2f}" y1="{sy(a * lo + b):.2f}" x2="{sx(hi):.2f}" '
                        f'y2="{sy(a * hi + b):.2f}" stroke="red"/>')
    return _svg(w, h, body)
