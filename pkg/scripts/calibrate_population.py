#!/usr/bin/env python3
"""Verify the committed subject roster against the population targets.

Runs the full simulated study at the default seed and prints every
aggregate the roster is calibrated for, next to its target.  Run this after
any change to the roster table, the judgment-noise model or the protocol
engine; the roster ships only when every line reads OK.
"""

import sys

from clicksim.analysis import pulse_unanimity_thresholds, study_summary
from clicksim.study import DEFAULT_STUDY_SEED, run_simulated_study

UNANIMOUS_TARGETS = {5: (70.0, 130.0), 25: (25.0, 55.0), 50: (10.0, 30.0)}
REJECT_BEYOND = {5: 200.0, 25: 145.0, 50: 90.0}
PULSE_TARGETS = {5: 11.0, 25: 32.0, 50: 53.0}
STEP_MS = 10.0


def check(name: str, ok: bool, detail: str) -> bool:
    print(f"{'OK  ' if ok else 'MISS'} {name}: {detail}")
    return ok


def main() -> int:
    records = run_simulated_study(DEFAULT_STUDY_SEED)
    summary = study_summary(records)
    all_ok = True

    for duty, (lo_t, hi_t) in UNANIMOUS_TARGETS.items():
        span = summary["unanimous_ranges_ms"][duty]
        ok = span is not None and span[0] <= lo_t + STEP_MS and span[1] >= hi_t - STEP_MS
        all_ok &= check(
            f"unanimous range {duty}%", ok, f"{span} vs [{lo_t:g}, {hi_t:g}] +/- one step"
        )

    for duty, limit in REJECT_BEYOND.items():
        last = summary["last_accepted_duration_ms"][duty]
        all_ok &= check(
            f"unanimous reject {duty}%", last is not None and last <= limit,
            f"last accepted {last} vs limit {limit:g}",
        )

    thresholds = pulse_unanimity_thresholds([t for r in records for t in r.trials])
    for duty, target in PULSE_TARGETS.items():
        got = thresholds.get(duty)
        ok = got is not None and abs(got - target) <= STEP_MS
        all_ok &= check(f"pulse unanimity {duty}%", ok, f"{got} vs {target:g} +/- one step")

    all_ok &= check(
        "group split", summary["group_counts"] == {"1": 6, "2": 3, "3": 1},
        f"{summary['group_counts']} vs 6/3/1",
    )

    rated_high = all(
        any(t.rating is not None and t.rating >= 6 for t in r.trials) for r in records
    )
    all_ok &= check("every subject rates >= 6 somewhere", rated_high, str(rated_high))

    print()
    print(f"subject bests: {summary['bests']}")
    print(f"initial pulse widths: {summary['initial_pulse_widths_ms']}")
    return 0 if all_ok else 1


if __name__ == "__main__":
    sys.exit(main())
