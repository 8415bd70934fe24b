"""Two-section experiment protocol: sweep blocks, boundary extraction, adaptive rating.

Section 1 presents six sweep blocks (three duty cycles, each swept once in
each direction over 26 durations) and asks for an acceptable-click judgment
plus a pulse/oscillation percept per stimulus.  The smallest and largest
accepted durations of the two sweeps are averaged into per-duty acceptance
boundaries.  Section 2 rates clicks inside those boundaries in three
successively finer rounds (span/4, 10 ms, 5 ms spacing) centered on the
best-rated duration of the previous round.

The engine is pull-based: it yields the next stimulus, then blocks until a
response is submitted.  All ordering randomness derives from the session
seed, so a record replays to an identical trial sequence.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
import random
from dataclasses import asdict, dataclass, field

from .drive import DEFAULT_AMPLITUDE_PP_MN, StimulusParams

SESSION_SCHEMA_VERSION = 1

DUTIES_PCT = (5, 25, 50)
DURATION_FLOOR_MS = 1
DURATION_CEIL_MS = 251
SWEEP_STEP_MS = 10
SWEEP_LEVELS = 26
ROUND_REPEATS = 3

TRIAL_CSV_HEADER = "subject,section,block,duty_pct,duration_ms,direction,answer1,answer2,rating"


class Direction(enum.Enum):
    INCREASING = "INCREASING"
    DECREASING = "DECREASING"


def sweep_durations(direction: Direction) -> tuple[int, ...]:
    """The 26 sweep durations (1, 11, ..., 251 ms) in presentation order."""
    durations = tuple(range(DURATION_FLOOR_MS, DURATION_CEIL_MS + 1, SWEEP_STEP_MS))
    return durations if direction is Direction.INCREASING else durations[::-1]


@dataclass(frozen=True)
class BlockPlan:
    duty_pct: int
    direction: Direction
    durations: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.durations != sweep_durations(self.direction):
            raise ValueError("block durations must be the standard sweep")


def _derive(seed: int, tag: str) -> int:
    digest = hashlib.blake2b(f"{seed}:{tag}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def plan_section1(seed: int, duties=DUTIES_PCT) -> list[BlockPlan]:
    """Six blocks (duty x direction), order shuffled by the seed."""
    blocks = [
        BlockPlan(duty, direction, sweep_durations(direction))
        for duty in duties
        for direction in (Direction.INCREASING, Direction.DECREASING)
    ]
    random.Random(_derive(seed, "section1")).shuffle(blocks)
    return blocks


@dataclass(frozen=True)
class TrialRecord:
    token: str
    section: int
    duty_pct: int
    duration_ms: float
    presentation: int
    responder_id: str
    t: float
    block: int | None = None
    direction: str | None = None
    round_no: int | None = None
    acceptable: bool | None = None
    percept: str | None = None
    rating: int | None = None

    def __post_init__(self) -> None:
        if self.section == 1:
            if self.acceptable is None or self.percept is None:
                raise ValueError("section-1 records carry both answers")
        elif self.section == 2:
            if self.rating is None:
                raise ValueError("section-2 records carry a rating")
        else:
            raise ValueError("section must be 1 or 2")


@dataclass
class AcceptRegion:
    """Per-duty acceptable-duration boundaries; duties with no YES are absent."""

    bounds: dict[int, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for duty, (lo, hi) in self.bounds.items():
            if lo > hi:
                raise ValueError(f"min > max at duty {duty}")

    def duties(self) -> list[int]:
        return sorted(self.bounds)

    def get(self, duty: int) -> tuple[float, float] | None:
        return self.bounds.get(duty)


def extract_boundaries(trials, responder_id: str | None = None) -> AcceptRegion:
    """Average the smallest/largest accepted duration over the two sweeps.

    Per duty cycle: the minimum boundary is the mean over directions of the
    smallest accepted duration in that sweep, the maximum likewise for the
    largest; a duty with no accepted stimulus in either sweep stays empty.
    """
    by_duty: dict[int, dict[str, list[float]]] = {}
    for rec in trials:
        if rec.section != 1 or rec.acceptable is None:
            continue
        if responder_id is not None and rec.responder_id != responder_id:
            continue
        if rec.acceptable:
            slot = by_duty.setdefault(rec.duty_pct, {})
            slot.setdefault(rec.direction or "", []).append(rec.duration_ms)
    bounds = {}
    for duty, per_dir in by_duty.items():
        mins = [min(v) for v in per_dir.values() if v]
        maxs = [max(v) for v in per_dir.values() if v]
        if mins:
            bounds[duty] = (sum(mins) / len(mins), sum(maxs) / len(maxs))
    return AcceptRegion(bounds=bounds)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def plan_round1(bounds: tuple[float, float]) -> list[int]:
    """Five equally spaced durations spanning the acceptance boundaries.

    Durations are kept at 1 ms resolution.  A degenerate region collapses to
    a single duration.  Boundaries come from sweep answers, so they already
    lie within the presentable range.
    """
    lo, hi = bounds
    if lo > hi:
        raise ValueError("invalid region")
    if lo == hi:
        return [_round_half_up(lo)]
    step = (hi - lo) / 4.0
    return [_round_half_up(lo + i * step) for i in range(5)]


def _neighbors(durations: list[int], center: int) -> tuple[float, float]:
    """Adjacent planned durations around the center; missing sides are infinite."""
    ordered = sorted(durations)
    idx = ordered.index(center)
    left = ordered[idx - 1] if idx > 0 else -math.inf
    right = ordered[idx + 1] if idx < len(ordered) - 1 else math.inf
    return left, right


def plan_round2(best: int, round1: list[int]) -> list[int]:
    """10 ms lattice through the best duration, open-bounded by its neighbors."""
    if best not in round1:
        raise ValueError("best must be one of the round-1 durations")
    left, right = _neighbors(round1, best)
    out = [best]
    d = best - SWEEP_STEP_MS
    while d > left and d >= DURATION_FLOOR_MS:
        out.append(d)
        d -= SWEEP_STEP_MS
    d = best + SWEEP_STEP_MS
    while d < right and d <= DURATION_CEIL_MS:
        out.append(d)
        d += SWEEP_STEP_MS
    return sorted(out)


def plan_round3(best2: int, round2: list[int] | None = None) -> list[int]:
    """The best round-2 duration and its 5 ms neighbors, within bounds."""
    left, right = _neighbors(round2, best2) if round2 else (-math.inf, math.inf)
    out = [
        d
        for d in (best2 - 5, best2, best2 + 5)
        if DURATION_FLOOR_MS <= d <= DURATION_CEIL_MS and (left < d < right or d == best2)
    ]
    return sorted(out)


@dataclass(frozen=True)
class PendingTrial:
    """Descriptor of the stimulus the session is waiting on."""

    token: str
    ordinal: int
    section: int
    duty_pct: int
    duration_ms: float
    presentation: int
    params: StimulusParams
    block: int | None = None
    direction: str | None = None
    round_no: int | None = None
    progress: dict = field(default_factory=dict)


class PhaseError(ValueError):
    """Submitted response does not fit the phase the session is in."""

    def __init__(self, message: str, phase: dict):
        super().__init__(message)
        self.phase = phase


class ExperimentSession:
    """Pull-based session engine; single owner, deterministic given its seed."""

    def __init__(
        self,
        seed: int,
        responder_id: str = "anonymous",
        mode: str = "SIMULATED",
        session_id: str | None = None,
        amplitude_pp_mn: float = DEFAULT_AMPLITUDE_PP_MN,
        duties=DUTIES_PCT,
    ):
        self.seed = seed
        self.responder_id = responder_id
        self.mode = mode
        self.session_id = session_id or f"{mode.lower()}-{seed}-{responder_id}"
        self.amplitude_pp_mn = amplitude_pp_mn
        self.duties = tuple(duties)
        self.blocks = plan_section1(seed, self.duties)
        self.trials: list[TrialRecord] = []
        self.regions: AcceptRegion | None = None
        self.round_plans: dict[int, dict[str, list[int]]] = {}
        self.bests: dict[int, dict[str, int]] = {}
        # Section-2 execution state: list of (duty, round_no, presentation order).
        self._s2_queue: list[tuple[int, int, list[int]]] = []
        self._s2_pos = 0

    # -- planning helpers -------------------------------------------------

    def _shuffled_presentations(self, duty: int, round_no: int, durations: list[int]) -> list[int]:
        order = [d for d in durations for _ in range(ROUND_REPEATS)]
        random.Random(_derive(self.seed, f"s2:{duty}:r{round_no}")).shuffle(order)
        return order

    def _finish_section1(self) -> None:
        self.regions = extract_boundaries(self.trials, self.responder_id)
        for duty in sorted(self.regions.duties()):
            bounds = self.regions.get(duty)
            durations = plan_round1(bounds)
            self.round_plans[duty] = {"round1": durations}
            self._s2_queue.append((duty, 1, self._shuffled_presentations(duty, 1, durations)))
        self._s2_pos = 0

    def _rated_durations(self, duty: int) -> set[int]:
        return {
            int(r.duration_ms)
            for r in self.trials
            if r.section == 2 and r.duty_pct == duty
        }

    def _mean_ratings(self, duty: int, round_no: int | None = None) -> dict[int, float]:
        sums: dict[int, list[int]] = {}
        for r in self.trials:
            if r.section != 2 or r.duty_pct != duty:
                continue
            if round_no is not None and r.round_no != round_no:
                continue
            sums.setdefault(int(r.duration_ms), []).append(r.rating)
        return {d: sum(v) / len(v) for d, v in sums.items()}

    def _best_duration(self, duty: int, round_no: int | None = None) -> int:
        ratings = self._mean_ratings(duty, round_no)
        # Highest mean rating; ties break toward the shorter duration.
        return min(sorted(ratings), key=lambda d: (-ratings[d], d))

    def _finish_round(self, duty: int, round_no: int) -> None:
        best = self._best_duration(duty, round_no)
        plans = self.round_plans[duty]
        self.bests.setdefault(duty, {})[f"round{round_no}"] = best
        if round_no == 1 and len(plans["round1"]) > 1:
            durations = plan_round2(best, plans["round1"])
            already = self._rated_durations(duty) - {best}
            durations = [d for d in durations if d not in already]
            plans["round2"] = durations
            self._s2_queue.append((duty, 2, self._shuffled_presentations(duty, 2, durations)))
        elif round_no == 2:
            durations = plan_round3(best, plans["round2"])
            already = self._rated_durations(duty) - {best}
            durations = [d for d in durations if d not in already]
            plans["round3"] = durations
            self._s2_queue.append((duty, 3, self._shuffled_presentations(duty, 3, durations)))
        else:
            self.bests[duty]["final"] = self._best_duration(duty)

    # -- pull interface ----------------------------------------------------

    def phase(self) -> dict:
        pending = self.next_stimulus()
        if pending is None:
            return {"section": None, "expects": None, "complete": True}
        if pending.section == 1:
            return {
                "section": 1,
                "expects": "acceptable (YES/NO) and percept (PULSE/OSCILLATION)",
            }
        return {"section": 2, "expects": "rating (integer 0-7)"}

    @property
    def complete(self) -> bool:
        return self.next_stimulus() is None

    def next_stimulus(self) -> PendingTrial | None:
        n = len(self.trials)
        s1_total = len(self.blocks) * SWEEP_LEVELS
        if n < s1_total:
            block_idx, pos = divmod(n, SWEEP_LEVELS)
            block = self.blocks[block_idx]
            duration = block.durations[pos]
            return PendingTrial(
                token=f"t{n:04d}",
                ordinal=n,
                section=1,
                duty_pct=block.duty_pct,
                duration_ms=float(duration),
                presentation=pos,
                params=StimulusParams(block.duty_pct, float(duration), self.amplitude_pp_mn),
                block=block_idx,
                direction=block.direction.value,
                progress={
                    "section": 1,
                    "block": block_idx + 1,
                    "n_blocks": len(self.blocks),
                    "trial_in_block": pos + 1,
                    "block_size": SWEEP_LEVELS,
                },
            )
        if self.regions is None:
            self._finish_section1()
        while self._s2_pos < len(self._s2_queue):
            duty, round_no, order = self._s2_queue[self._s2_pos]
            done = sum(
                1
                for r in self.trials
                if r.section == 2 and r.duty_pct == duty and r.round_no == round_no
            )
            if done < len(order):
                duration = order[done]
                return PendingTrial(
                    token=f"t{n:04d}",
                    ordinal=n,
                    section=2,
                    duty_pct=duty,
                    duration_ms=float(duration),
                    presentation=done,
                    params=StimulusParams(duty, float(duration), self.amplitude_pp_mn),
                    round_no=round_no,
                    progress={
                        "section": 2,
                        "round": round_no,
                        "trial_in_round": done + 1,
                        "round_size": len(order),
                    },
                )
            self._finish_round(duty, round_no)
            self._s2_pos += 1
        return None

    def submit(self, response: dict) -> TrialRecord:
        pending = self.next_stimulus()
        if pending is None:
            raise PhaseError("session complete", self.phase())
        if pending.section == 1:
            if "rating" in response or "acceptable" not in response or "percept" not in response:
                raise PhaseError(
                    "section1 expects YES/NO + percept", {"section": 1, "pending": pending.token}
                )
            acceptable = bool(response["acceptable"])
            percept = str(response["percept"])
            if percept not in ("PULSE", "OSCILLATION"):
                raise PhaseError("percept must be PULSE or OSCILLATION", self.phase())
            record = TrialRecord(
                token=pending.token,
                section=1,
                duty_pct=pending.duty_pct,
                duration_ms=pending.duration_ms,
                presentation=pending.presentation,
                responder_id=self.responder_id,
                t=float(pending.ordinal),
                block=pending.block,
                direction=pending.direction,
                acceptable=acceptable,
                percept=percept,
            )
        else:
            if "rating" not in response:
                raise PhaseError(
                    "section2 expects a rating", {"section": 2, "pending": pending.token}
                )
            rating = int(response["rating"])
            if not 0 <= rating <= 7:
                raise PhaseError("rating must lie in 0..7", self.phase())
            record = TrialRecord(
                token=pending.token,
                section=2,
                duty_pct=pending.duty_pct,
                duration_ms=pending.duration_ms,
                presentation=pending.presentation,
                responder_id=self.responder_id,
                t=float(pending.ordinal),
                round_no=pending.round_no,
                rating=rating,
            )
        self.trials.append(record)
        return record

    # -- persistence -------------------------------------------------------

    def record(self) -> "SessionRecord":
        complete = self.next_stimulus() is None
        return SessionRecord(
            session_id=self.session_id,
            mode=self.mode,
            responder_id=self.responder_id,
            seed=self.seed,
            duties=self.duties,
            amplitude_pp_mn=self.amplitude_pp_mn,
            blocks=self.blocks,
            trials=list(self.trials),
            regions=self.regions,
            round_plans={k: dict(v) for k, v in self.round_plans.items()},
            bests={k: dict(v) for k, v in self.bests.items()},
            complete=complete,
            cursor={"trials_recorded": len(self.trials), "phase": self.phase()},
        )

    @classmethod
    def from_record(cls, record: "SessionRecord") -> "ExperimentSession":
        """Rebuild the engine by replaying the stored responses over a fresh plan."""
        session = cls(
            seed=record.seed,
            responder_id=record.responder_id,
            mode=record.mode,
            session_id=record.session_id,
            amplitude_pp_mn=record.amplitude_pp_mn,
            duties=record.duties,
        )
        for stored in record.trials:
            pending = session.next_stimulus()
            if (
                pending is None
                or pending.section != stored.section
                or pending.duty_pct != stored.duty_pct
                or pending.duration_ms != stored.duration_ms
            ):
                raise ValueError(f"stored trial {stored.token} does not match the plan")
            if stored.section == 1:
                session.submit({"acceptable": stored.acceptable, "percept": stored.percept})
            else:
                session.submit({"rating": stored.rating})
        return session


@dataclass
class SessionRecord:
    """Replayable record of one session; derived fields recompute from trials."""

    session_id: str
    mode: str
    responder_id: str
    seed: int
    duties: tuple[int, ...]
    amplitude_pp_mn: float
    blocks: list[BlockPlan]
    trials: list[TrialRecord]
    regions: AcceptRegion | None
    round_plans: dict[int, dict[str, list[int]]]
    bests: dict[int, dict[str, int]]
    complete: bool
    cursor: dict
    version: int = SESSION_SCHEMA_VERSION

    def recompute_regions(self) -> AcceptRegion:
        return extract_boundaries(self.trials, self.responder_id)

    def to_json_dict(self) -> dict:
        return {
            "version": self.version,
            "session_id": self.session_id,
            "mode": self.mode,
            "responder_id": self.responder_id,
            "seed": self.seed,
            "duties": list(self.duties),
            "amplitude_pp_mn": self.amplitude_pp_mn,
            "blocks": [
                {
                    "duty_pct": b.duty_pct,
                    "direction": b.direction.value,
                    "durations": list(b.durations),
                }
                for b in self.blocks
            ],
            "trials": [asdict(t) for t in self.trials],
            "regions": (
                {str(d): list(v) for d, v in sorted(self.regions.bounds.items())}
                if self.regions is not None
                else None
            ),
            "round_plans": {
                str(duty): {k: list(v) for k, v in sorted(plans.items())}
                for duty, plans in sorted(self.round_plans.items())
            },
            "bests": {
                str(duty): dict(sorted(v.items())) for duty, v in sorted(self.bests.items())
            },
            "complete": self.complete,
            "cursor": self.cursor,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "SessionRecord":
        if doc.get("version") != SESSION_SCHEMA_VERSION:
            raise ValueError(f"unsupported session schema version: {doc.get('version')!r}")
        return cls(
            session_id=doc["session_id"],
            mode=doc["mode"],
            responder_id=doc["responder_id"],
            seed=doc["seed"],
            duties=tuple(doc["duties"]),
            amplitude_pp_mn=doc["amplitude_pp_mn"],
            blocks=[
                BlockPlan(
                    duty_pct=b["duty_pct"],
                    direction=Direction(b["direction"]),
                    durations=tuple(b["durations"]),
                )
                for b in doc["blocks"]
            ],
            trials=[TrialRecord(**t) for t in doc["trials"]],
            regions=(
                AcceptRegion(
                    bounds={int(d): tuple(v) for d, v in doc["regions"].items()}
                )
                if doc["regions"] is not None
                else None
            ),
            round_plans={
                int(duty): {k: list(v) for k, v in plans.items()}
                for duty, plans in doc["round_plans"].items()
            },
            bests={int(duty): dict(v) for duty, v in doc["bests"].items()},
            complete=doc["complete"],
            cursor=doc["cursor"],
        )

    def dumps(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True) + "\n"

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.dumps())

    @classmethod
    def load(cls, path) -> "SessionRecord":
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh))

    def trials_csv_rows(self) -> list[str]:
        rows = [TRIAL_CSV_HEADER]
        for t in self.trials:
            rows.append(
                ",".join(
                    [
                        t.responder_id,
                        str(t.section),
                        "" if t.block is None else str(t.block),
                        str(t.duty_pct),
                        f"{t.duration_ms:g}",
                        t.direction or "",
                        "" if t.acceptable is None else ("YES" if t.acceptable else "NO"),
                        t.percept or "",
                        "" if t.rating is None else str(t.rating),
                    ]
                )
            )
        return rows


def run_session(
    responder,
    seed: int,
    mode: str = "SIMULATED",
    session_id: str | None = None,
    amplitude_pp_mn: float = DEFAULT_AMPLITUDE_PP_MN,
) -> SessionRecord:
    """Drive a full session against a responder (simulated subject or adapter)."""
    session = ExperimentSession(
        seed=seed,
        responder_id=getattr(responder, "id", "anonymous"),
        mode=mode,
        session_id=session_id,
        amplitude_pp_mn=amplitude_pp_mn,
    )
    while (pending := session.next_stimulus()) is not None:
        if pending.section == 1:
            session.submit(responder.respond_section1(pending))
        else:
            session.submit({"rating": responder.respond_section2(pending)})
    return session.record()
