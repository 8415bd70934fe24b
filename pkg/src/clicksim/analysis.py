"""Analyses over session records: overlap map, percentage curves, fits, grouping.

All transforms are pure functions of the records they are given; identical
inputs produce identical artifacts.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .protocol import DUTIES_PCT, DURATION_CEIL_MS, DURATION_FLOOR_MS, SessionRecord

DUTY_AXIS_MIN = 5
DUTY_AXIS_MAX = 50


def region_interval_at(bounds: dict[int, tuple[float, float]], duty_pct: float):
    """Acceptable duration interval at a duty, linearly interpolated.

    Boundaries connect linearly between adjacent calibrated duty levels; no
    extrapolation outside the covered duty span.
    """
    duties = sorted(bounds)
    if not duties or duty_pct < duties[0] or duty_pct > duties[-1]:
        return None
    if duty_pct == duties[0]:
        return bounds[duties[0]]
    for d0, d1 in zip(duties, duties[1:]):
        if d0 <= duty_pct <= d1:
            w = (duty_pct - d0) / (d1 - d0)
            lo = (1.0 - w) * bounds[d0][0] + w * bounds[d1][0]
            hi = (1.0 - w) * bounds[d0][1] + w * bounds[d1][1]
            return (lo, hi)
    return None


def subject_region_polygon(bounds: dict[int, tuple[float, float]]):
    """Region polygon vertices in (duration, duty) space.

    Vertices run along the minimum boundary with increasing duty, then back
    along the maximum boundary; a single-duty region degenerates to a
    segment.
    """
    duties = sorted(bounds)
    if not duties:
        raise ValueError("empty region")
    lows = [(bounds[d][0], float(d)) for d in duties]
    highs = [(bounds[d][1], float(d)) for d in reversed(duties)]
    return lows + highs


def region_contains(bounds: dict[int, tuple[float, float]], duty_pct: float,
                    duration_ms: float) -> bool:
    interval = region_interval_at(bounds, duty_pct)
    return interval is not None and interval[0] <= duration_ms <= interval[1]


@dataclass
class OverlapMap:
    """Counts of subjects whose region contains each (duration, duty) cell."""

    duties_pct: np.ndarray
    durations_ms: np.ndarray
    counts: np.ndarray  # shape (len(duties), len(durations))
    n_regions: int

    def count_at(self, duty_pct: float, duration_ms: float) -> int:
        i = int(np.argmin(np.abs(self.duties_pct - duty_pct)))
        j = int(np.argmin(np.abs(self.durations_ms - duration_ms)))
        return int(self.counts[i, j])

    def span_with_count(self, duty_pct: float, count: int):
        """(min, max) duration with exactly ``count`` agreeing regions, or None."""
        i = int(np.argmin(np.abs(self.duties_pct - duty_pct)))
        idx = np.nonzero(self.counts[i] == count)[0]
        if len(idx) == 0:
            return None
        return (float(self.durations_ms[idx[0]]), float(self.durations_ms[idx[-1]]))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["duty_pct"] + [f"{d:g}" for d in self.durations_ms])
            for i, duty in enumerate(self.duties_pct):
                writer.writerow([f"{duty:g}"] + [str(int(c)) for c in self.counts[i]])


def overlap_map(
    regions,
    duty_step_pct: float = 1.0,
    duration_step_ms: float = 1.0,
) -> OverlapMap:
    """Count, per grid cell, how many subject regions contain the cell center."""
    if not regions:
        raise ValueError("at least one region required")
    duties = np.arange(DUTY_AXIS_MIN, DUTY_AXIS_MAX + duty_step_pct / 2, duty_step_pct)
    durations = np.arange(
        DURATION_FLOOR_MS, DURATION_CEIL_MS + duration_step_ms / 2, duration_step_ms
    )
    counts = np.zeros((len(duties), len(durations)), dtype=np.int16)
    for bounds in regions:
        for i, duty in enumerate(duties):
            interval = region_interval_at(bounds, float(duty))
            if interval is None:
                continue
            counts[i] += (durations >= interval[0]) & (durations <= interval[1])
    return OverlapMap(
        duties_pct=duties, durations_ms=durations, counts=counts, n_regions=len(regions)
    )


def percentage_curves(trials, n_subjects: int | None = None) -> dict:
    """Per duty and duration: percent judged good and percent felt as a pulse.

    Percentages are out of two trials per subject (one per sweep direction);
    cells with a different trial count are flagged and left unquantified.
    """
    subjects = sorted({t.responder_id for t in trials if t.section == 1})
    n = n_subjects if n_subjects is not None else len(subjects)
    expected = 2 * n
    cells: dict[tuple[int, float], dict] = {}
    for t in trials:
        if t.section != 1:
            continue
        cell = cells.setdefault(
            (t.duty_pct, t.duration_ms), {"trials": 0, "good": 0, "pulse": 0}
        )
        cell["trials"] += 1
        cell["good"] += bool(t.acceptable)
        cell["pulse"] += t.percept == "PULSE"
    out: dict[int, list[dict]] = {}
    for (duty, duration), cell in sorted(cells.items()):
        flagged = cell["trials"] != expected
        out.setdefault(duty, []).append(
            {
                "duration_ms": duration,
                "pct_good": None if flagged else 100.0 * cell["good"] / expected,
                "pct_pulse": None if flagged else 100.0 * cell["pulse"] / expected,
                "n_trials": cell["trials"],
                "flagged": flagged,
            }
        )
    return out


def pulse_unanimity_thresholds(trials) -> dict[int, float | None]:
    """Largest duration up to which every trial reported a pulse, per duty."""
    by_duty: dict[int, dict[float, bool]] = {}
    for t in trials:
        if t.section != 1:
            continue
        slot = by_duty.setdefault(t.duty_pct, {})
        slot[t.duration_ms] = slot.get(t.duration_ms, True) and t.percept == "PULSE"
    thresholds: dict[int, float | None] = {}
    for duty, unanimous in by_duty.items():
        t = None
        for duration in sorted(unanimous):
            if not unanimous[duration]:
                break
            t = duration
        thresholds[duty] = t
    return thresholds


@dataclass(frozen=True)
class QuadFit:
    """Least-squares parabola rating ~ a*d^2 + b*d + c over rated durations."""

    a: float
    b: float
    c: float
    residual_rms: float
    argmax_ms: float
    span_ms: tuple[float, float]

    def value_at(self, d: float) -> float:
        return self.a * d * d + self.b * d + self.c


def fit_quadratic(points) -> QuadFit:
    """Fit a parabola to (duration, rating) points by least squares."""
    pts = [(float(d), float(r)) for d, r in points]
    if len(pts) < 3:
        raise ValueError("need at least 3 points")
    durations = np.array([p[0] for p in pts])
    ratings = np.array([p[1] for p in pts])
    if len(set(durations.tolist())) < 2:
        raise ValueError("rank-deficient design: all durations identical")
    design = np.column_stack([durations**2, durations, np.ones_like(durations)])
    coeffs, *_ = np.linalg.lstsq(design, ratings, rcond=None)
    a, b, c = (float(v) for v in coeffs)
    resid = design @ coeffs - ratings
    rms = float(np.sqrt(np.mean(resid**2)))
    lo, hi = float(durations.min()), float(durations.max())
    if a < 0.0:
        vertex = -b / (2.0 * a)
        if lo <= vertex <= hi:
            argmax = vertex
        else:
            argmax = _best_endpoint(a, b, c, lo, hi)
    else:
        argmax = _best_endpoint(a, b, c, lo, hi)
    return QuadFit(a=a, b=b, c=c, residual_rms=rms, argmax_ms=argmax, span_ms=(lo, hi))


def _best_endpoint(a: float, b: float, c: float, lo: float, hi: float) -> float:
    v_lo = a * lo * lo + b * lo + c
    v_hi = a * hi * hi + b * hi + c
    return lo if v_lo >= v_hi else hi


def quad_fits(records) -> dict[str, dict[int, QuadFit]]:
    """Per (subject, duty) fits over pooled section-2 ratings (all rounds)."""
    out: dict[str, dict[int, QuadFit]] = {}
    for rec in records:
        points: dict[int, list[tuple[float, float]]] = {}
        for t in rec.trials:
            if t.section == 2:
                points.setdefault(t.duty_pct, []).append((t.duration_ms, float(t.rating)))
        fits = {}
        for duty, pts in sorted(points.items()):
            if len(pts) >= 3 and len({p[0] for p in pts}) >= 2:
                fits[duty] = fit_quadratic(pts)
        out[rec.responder_id] = fits
    return out


def pulse_width_grouping(
    bests: dict[str, dict[int, float]],
    regions: dict[str, dict[int, tuple[float, float]]],
) -> dict[str, dict]:
    """Group subjects by how their best duration relates to duty cycle.

    Group 2: best durations sit in the shortest third of the subject's
    acceptable range at every duty; group 3: the longest third at every
    duty; group 1: best duration strictly decreases as duty increases.
    Remaining subjects take the nearest group by rule distance.  Initial
    pulse widths (duty x duration) accompany each label.
    """
    out: dict[str, dict] = {}
    for sid, best_by_duty in bests.items():
        duties = sorted(best_by_duty)
        if len(duties) < len(DUTIES_PCT):
            out[sid] = {"group": None, "flagged": "missing duty", "widths_ms": {}}
            continue
        durations = [best_by_duty[d] for d in duties]
        positions = []
        for d in duties:
            lo, hi = regions[sid][d]
            positions.append((best_by_duty[d] - lo) / (hi - lo) if hi > lo else 0.5)
        all_short = all(p <= 1.0 / 3.0 for p in positions)
        all_long = all(p >= 2.0 / 3.0 for p in positions)
        decreasing = all(a > b for a, b in zip(durations, durations[1:]))
        if all_short:
            group = 2
        elif all_long:
            group = 3
        elif decreasing:
            group = 1
        else:
            d1 = sum(a <= b for a, b in zip(durations, durations[1:])) / 2.0
            d2 = sum(max(0.0, p - 1.0 / 3.0) for p in positions) / len(positions)
            d3 = sum(max(0.0, 2.0 / 3.0 - p) for p in positions) / len(positions)
            group = min(((d1, 1), (d2, 2), (d3, 3)), key=lambda x: (x[0], x[1]))[1]
        out[sid] = {
            "group": group,
            "widths_ms": {d: d / 100.0 * best_by_duty[d] for d in duties},
        }
    return out


def final_bests(records) -> dict[str, dict[int, float]]:
    return {
        rec.responder_id: {
            duty: float(v["final"]) for duty, v in rec.bests.items() if "final" in v
        }
        for rec in records
    }


def study_summary(records) -> dict:
    """Aggregate a set of session records into the derived study results."""
    regions = {
        rec.responder_id: dict(rec.regions.bounds) if rec.regions else {}
        for rec in records
    }
    all_trials = [t for rec in records for t in rec.trials]
    omap = overlap_map([b for b in regions.values() if b])
    unanimous = {
        duty: omap.span_with_count(duty, omap.n_regions) for duty in DUTIES_PCT
    }
    zero_beyond = {}
    for duty in DUTIES_PCT:
        i = int(np.argmin(np.abs(omap.duties_pct - duty)))
        nonzero = np.nonzero(omap.counts[i] > 0)[0]
        zero_beyond[duty] = (
            float(omap.durations_ms[nonzero[-1]]) if len(nonzero) else None
        )
    bests = final_bests(records)
    groups = pulse_width_grouping(bests, regions)
    group_counts: dict[int, int] = {}
    for info in groups.values():
        if info["group"] is not None:
            group_counts[info["group"]] = group_counts.get(info["group"], 0) + 1
    return {
        "n_subjects": len(records),
        "regions": regions,
        "unanimous_ranges_ms": unanimous,
        "last_accepted_duration_ms": zero_beyond,
        "pulse_unanimity_ms": pulse_unanimity_thresholds(all_trials),
        "bests": bests,
        "groups": {sid: info["group"] for sid, info in sorted(groups.items())},
        "group_counts": {str(k): v for k, v in sorted(group_counts.items())},
        "initial_pulse_widths_ms": {
            sid: info["widths_ms"] for sid, info in sorted(groups.items())
        },
    }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def write_artifacts(records: list[SessionRecord], outdir, plots: bool = False) -> list[str]:
    """Write plot-ready CSVs and the summary JSON; optionally static SVG figures."""
    import os

    os.makedirs(outdir, exist_ok=True)
    written = []

    regions = [dict(rec.regions.bounds) for rec in records if rec.regions]
    omap = overlap_map(regions)
    path = os.path.join(outdir, "overlap_grid.csv")
    omap.to_csv(path)
    written.append(path)

    all_trials = [t for rec in records for t in rec.trials]
    curves = percentage_curves(all_trials, n_subjects=len(records))
    path = os.path.join(outdir, "percentage_curves.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["duty_pct", "duration_ms", "pct_good", "pct_pulse", "n_trials"])
        for duty in sorted(curves):
            for cell in curves[duty]:
                writer.writerow(
                    [
                        duty,
                        f"{cell['duration_ms']:g}",
                        "" if cell["pct_good"] is None else f"{cell['pct_good']:g}",
                        "" if cell["pct_pulse"] is None else f"{cell['pct_pulse']:g}",
                        cell["n_trials"],
                    ]
                )
    written.append(path)

    fits = quad_fits(records)
    path = os.path.join(outdir, "quadratic_fits.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["subject", "duty_pct", "a", "b", "c", "residual_rms", "argmax_ms"])
        for sid in sorted(fits):
            for duty, fit in sorted(fits[sid].items()):
                writer.writerow(
                    [sid, duty, repr(fit.a), repr(fit.b), repr(fit.c),
                     repr(fit.residual_rms), repr(fit.argmax_ms)]
                )
    written.append(path)

    summary = study_summary(records)
    path = os.path.join(outdir, "summary.json")
    with open(path, "w") as fh:
        json.dump(_jsonable(summary), fh, indent=2, sort_keys=True)
        fh.write("\n")
    written.append(path)

    if plots:
        written += render_figures(records, omap, curves, fits, outdir)
    return written


def render_figures(records, omap, curves, fits, outdir) -> list[str]:
    """Static SVG figures mirroring the study's derived plots."""
    import os

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    written = []

    fig, ax = plt.subplots(figsize=(7, 4))
    im = ax.imshow(
        omap.counts,
        origin="lower",
        aspect="auto",
        extent=[
            float(omap.durations_ms[0]),
            float(omap.durations_ms[-1]),
            float(omap.duties_pct[0]),
            float(omap.duties_pct[-1]),
        ],
        cmap="viridis",
    )
    fig.colorbar(im, ax=ax, label="subjects agreeing")
    ax.set_xlabel("duration (ms)")
    ax.set_ylabel("duty cycle (%)")
    ax.set_title("Acceptable-click overlap")
    path = os.path.join(outdir, "overlap_map.svg")
    fig.savefig(path)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(7, 4))
    for duty in sorted(curves):
        cells = [c for c in curves[duty] if not c["flagged"]]
        d = [c["duration_ms"] for c in cells]
        ax.plot(d, [c["pct_good"] for c in cells], label=f"{duty}% good")
        ax.plot(d, [c["pct_pulse"] for c in cells], "--", label=f"{duty}% pulse")
    ax.set_xlabel("duration (ms)")
    ax.set_ylabel("% of trials")
    ax.legend(fontsize=7)
    path = os.path.join(outdir, "percentage_curves.svg")
    fig.savefig(path)
    plt.close(fig)
    written.append(path)

    sids = sorted(fits)
    if sids:
        fig, axes = plt.subplots(
            2, (len(sids) + 1) // 2, figsize=(3 * ((len(sids) + 1) // 2), 6),
            squeeze=False,
        )
        for ax, sid in zip(axes.flat, sids):
            for rec in records:
                if rec.responder_id != sid:
                    continue
                for duty in sorted(fits[sid]):
                    pts = [
                        (t.duration_ms, t.rating)
                        for t in rec.trials
                        if t.section == 2 and t.duty_pct == duty
                    ]
                    pts.sort()
                    ax.plot([p[0] for p in pts], [p[1] for p in pts], ".", ms=3)
                    fit = fits[sid][duty]
                    xs = np.linspace(fit.span_ms[0], fit.span_ms[1], 50)
                    ax.plot(xs, [fit.value_at(x) for x in xs], label=f"{duty}%")
            ax.set_title(sid, fontsize=8)
            ax.set_ylim(0, 7.5)
        axes.flat[0].legend(fontsize=6)
        path = os.path.join(outdir, "subject_ratings.svg")
        fig.savefig(path)
        plt.close(fig)
        written.append(path)

    return written
