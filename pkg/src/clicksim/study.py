"""Whole-study orchestration: one session per roster subject, replayable files."""

from __future__ import annotations

import hashlib
import os

from .protocol import SessionRecord, run_session
from .subject import SimulatedSubjectResponder, default_population

DEFAULT_STUDY_SEED = 7


def _session_seed(study_seed: int, subject_id: str) -> int:
    digest = hashlib.blake2b(f"{study_seed}:{subject_id}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def run_simulated_study(
    seed: int = DEFAULT_STUDY_SEED,
    roster=None,
    outdir: str | None = None,
) -> list[SessionRecord]:
    """Run the full two-section study for every subject in the roster.

    Session seeds derive from the study seed and the subject id, so the same
    study seed reproduces every session byte for byte.
    """
    roster = roster if roster is not None else default_population(seed)
    records = []
    for subj in roster:
        record = run_session(
            SimulatedSubjectResponder(subj),
            seed=_session_seed(seed, subj.id),
            mode="SIMULATED",
            session_id=f"sim-{seed}-{subj.id}",
        )
        records.append(record)
    if outdir is not None:
        save_study(records, outdir)
    return records


def save_study(records: list[SessionRecord], outdir: str) -> list[str]:
    os.makedirs(outdir, exist_ok=True)
    written = []
    for record in records:
        path = os.path.join(outdir, f"{record.session_id}.json")
        record.save(path)
        written.append(path)
    csv_path = os.path.join(outdir, "trials.csv")
    with open(csv_path, "w") as fh:
        rows = []
        for i, record in enumerate(records):
            body = record.trials_csv_rows()
            rows.extend(body if i == 0 else body[1:])
        fh.write("\n".join(rows) + "\n")
    written.append(csv_path)
    return written


def load_study(paths) -> list[SessionRecord]:
    return [SessionRecord.load(p) for p in paths]
