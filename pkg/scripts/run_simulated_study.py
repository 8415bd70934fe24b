#!/usr/bin/env python3
"""Run the full simulated study and derive all artifacts in one go."""

import argparse

from clicksim.analysis import write_artifacts
from clicksim.study import DEFAULT_STUDY_SEED, run_simulated_study, save_study


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=DEFAULT_STUDY_SEED)
    parser.add_argument("--outdir", default="study-out")
    parser.add_argument("--plots", action="store_true")
    args = parser.parse_args()

    records = run_simulated_study(args.seed)
    written = save_study(records, f"{args.outdir}/sessions")
    written += write_artifacts(records, f"{args.outdir}/analysis", plots=args.plots)
    for path in written:
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
