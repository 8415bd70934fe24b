"""Command-line entry point: simulate, isolate, run, analyze, serve."""

from __future__ import annotations

import argparse
import math
import os
import sys

from . import analysis as analysis_mod
from .click import render_click
from .device import (
    displacement_envelope,
    isolation_scenario,
    run_beat_drive,
    single_finger_state,
)
from .drive import StimulusParams, beat_frequency
from .protocol import ExperimentSession
from .study import DEFAULT_STUDY_SEED, load_study, run_simulated_study, save_study


def _cmd_simulate(args) -> int:
    params = StimulusParams(args.duty, args.duration, args.amplitude)
    state = single_finger_state()
    trace = render_click(params, state)
    trace.to_csv(args.out)
    triggers = trace.meta["trigger_t_s"]
    print(f"stimulus: {args.duty:g}% duty, {args.duration:g} ms, {args.amplitude:g} mN pp")
    if triggers:
        print(f"trigger at t={triggers[0]:.4f} s (threshold 600 mN)")
    else:
        print("threshold never reached; no stimulus fired")
    print(f"trace written to {args.out}")
    return 0


def _cmd_isolate(args) -> int:
    state = isolation_scenario()
    trace = run_beat_drive(state, duration_s=args.seconds)
    beat_hz = beat_frequency(state.drive)
    env = {
        fid: displacement_envelope(trace, fid, beat_hz) for fid in sorted(state.fingers)
    }
    env_us = {
        fid: displacement_envelope(trace, fid, state.drive.piezo_freq_hz)
        for fid in sorted(state.fingers)
    }
    ratio_db = 20.0 * math.log10(env["index"] / env["middle"])
    print(f"beat frequency: {beat_hz:g} Hz")
    for fid in sorted(env):
        print(f"{fid}: {beat_hz:g} Hz envelope {env[fid]:.1f} um, "
              f"carrier-band envelope {env_us[fid]:.4f} um")
    print(f"isolation ratio: {ratio_db:.1f} dB")
    return 0


def _cmd_run(args) -> int:
    if args.live:
        return _run_live(args)
    records = run_simulated_study(args.seed)
    save_study(records, args.outdir)
    print(f"{len(records)} sessions written to {args.outdir}")
    return 0


def _run_live(args) -> int:
    session = ExperimentSession(seed=args.seed, responder_id=args.label, mode="LIVE")
    print("Live session: answer each trial from the keyboard.")
    while (pending := session.next_stimulus()) is not None:
        desc = f"[{pending.token}] section {pending.section}"
        if pending.section == 1:
            desc += f" block {pending.block + 1} ({pending.direction})"
        else:
            desc += f" round {pending.round_no}"
        print(f"{desc}: duty {pending.duty_pct}%, duration {pending.duration_ms:g} ms")
        if pending.section == 1:
            yes = _ask("Acceptable button click? [y/n] ", ("y", "n")) == "y"
            pulse = _ask("Pulse or oscillation? [p/o] ", ("p", "o")) == "p"
            session.submit(
                {"acceptable": yes, "percept": "PULSE" if pulse else "OSCILLATION"}
            )
        else:
            rating = int(_ask("Rating 0-7: ", tuple(str(i) for i in range(8))))
            session.submit({"rating": rating})
    record = session.record()
    os.makedirs(args.outdir, exist_ok=True)
    path = os.path.join(args.outdir, f"{record.session_id}.json")
    record.save(path)
    print(f"session written to {path}")
    return 0


def _ask(prompt: str, allowed: tuple[str, ...]) -> str:
    while True:
        answer = input(prompt).strip().lower()
        if answer in allowed:
            return answer
        print(f"expected one of: {', '.join(allowed)}")


def _cmd_analyze(args) -> int:
    records = load_study(args.sessions)
    written = analysis_mod.write_artifacts(records, args.outdir, plots=args.plots)
    for path in written:
        print(f"wrote {path}")
    return 0


def _cmd_serve(args) -> int:
    from .service import serve

    serve(host=args.host, port=args.port, data_dir=args.data_dir)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clicksim",
        description="Simulator and experiment engine for surface button-click rendering.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="render one click press and export the trace")
    p.add_argument("--duty", type=float, default=25.0, help="duty cycle percent")
    p.add_argument("--duration", type=float, default=160.0, help="stimulus duration ms")
    p.add_argument("--amplitude", type=float, default=500.0, help="force amplitude mN pp")
    p.add_argument("--out", default="trace.csv", help="output CSV path")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("isolate", help="run the two-finger localization scenario")
    p.add_argument("--seconds", type=float, default=2.0)
    p.set_defaults(func=_cmd_isolate)

    p = sub.add_parser("run", help="execute the two-section study")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--simulated", action="store_true", default=True)
    mode.add_argument("--live", action="store_true", default=False)
    p.add_argument("--seed", type=int, default=DEFAULT_STUDY_SEED)
    p.add_argument("--label", default="subject", help="live responder label")
    p.add_argument("--outdir", default="sessions")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("analyze", help="derive study artifacts from session files")
    p.add_argument("sessions", nargs="+", help="session JSON files")
    p.add_argument("--outdir", default="analysis")
    p.add_argument("--plots", action="store_true", help="also render SVG figures")
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("serve", help="start the session service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--data-dir", default=None)
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
