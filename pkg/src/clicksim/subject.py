"""Simulated-subject oracle: maps a stimulus to judgments, percepts and ratings.

Each subject carries per-duty acceptance bounds (duration intervals judged an
acceptable click), a minimum detectable initial pulse width, an oscillation
onset (duration above which the percept answer flips from PULSE to
OSCILLATION), and a unimodal rating preference over the initial pulse width.
Sweep responses shift by half the subject's hysteresis: boundaries land
lower in increasing sweeps and higher in decreasing ones, so averaging the
two directions recovers the underlying bound.

The default ten-subject roster is a committed calibration fixture: its
population aggregates (unanimous acceptance ranges, unanimity-pulse onsets,
preference grouping 6/3/1) were verified end-to-end by
scripts/calibrate_population.py before the parameters were frozen here.

Judgments are noisy only near a subject's own boundaries (response flips are
a perceptual-uncertainty effect, not a flat error rate); noise draws come
from a counter-based generator keyed by (subject seed, trial index), so
parallel evaluation stays deterministic.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import dataclass, replace

from .device import PERCEPTION_THRESHOLD_10HZ_UM, predicted_envelope_um
from .drive import StimulusParams
from .protocol import Direction

ROSTER_SCHEMA_VERSION = 1
DEFAULT_ROSTER_SEED = 7

#: Gaussian half-widths (ms) of the response-flip band around a boundary.
JUDGE_NOISE_BAND_MS = 2.5
PERCEPT_NOISE_BAND_MS = 1.0


class Percept(enum.Enum):
    PULSE = "PULSE"
    OSCILLATION = "OSCILLATION"


@dataclass(frozen=True)
class SubjectModel:
    """One simulated participant; immutable after construction."""

    id: str
    group: int
    detect_width_ms: float
    osc_onset_ms: dict[int, float]
    accept_min_ms: dict[int, float]
    accept_max_ms: dict[int, float]
    sweep_shift_ms: float
    preferred_width_ms: float
    rating_peak: float
    rating_tolerance_ms: float
    judgment_noise: float = 0.05
    seed: int = 0

    def __post_init__(self) -> None:
        if self.group not in (1, 2, 3):
            raise ValueError("group must be 1, 2 or 3")
        if self.detect_width_ms <= 0.0:
            raise ValueError("detectable width must be positive")
        if any(v <= 0.0 for v in self.osc_onset_ms.values()):
            raise ValueError("oscillation onsets must be positive")
        if not 0.0 <= self.rating_peak <= 7.0:
            raise ValueError("rating peak must lie in [0, 7]")
        if self.rating_tolerance_ms <= 0.0:
            raise ValueError("rating tolerance must be positive")
        if not 0.0 <= self.judgment_noise < 1.0:
            raise ValueError("judgment noise must lie in [0, 1)")
        if set(self.accept_min_ms) != set(self.accept_max_ms):
            raise ValueError("acceptance bounds must cover the same duties")


def _interp_duty(table: dict[int, float], duty_pct: float) -> float:
    """Piecewise-linear interpolation over the calibrated duty levels."""
    duties = sorted(table)
    if duty_pct <= duties[0]:
        return table[duties[0]]
    if duty_pct >= duties[-1]:
        return table[duties[-1]]
    for d0, d1 in zip(duties, duties[1:]):
        if d0 <= duty_pct <= d1:
            w = (duty_pct - d0) / (d1 - d0)
            return (1.0 - w) * table[d0] + w * table[d1]
    raise AssertionError("unreachable")


def _unit_draw(subject: SubjectModel, trial: int, salt: str) -> float:
    """Deterministic uniform draw in [0, 1) keyed by (seed, id, trial, salt)."""
    key = f"{subject.seed}:{subject.id}:{trial}:{salt}".encode()
    digest = hashlib.blake2b(key, digest_size=8).digest()
    return int.from_bytes(digest, "big") / 2.0**64


def _flip(subject: SubjectModel, trial: int | None, salt: str,
          dist_ms: float, band_ms: float) -> bool:
    """Response flip near a boundary; probability decays with distance."""
    if trial is None or subject.judgment_noise == 0.0:
        return False
    p = subject.judgment_noise * math.exp(-(dist_ms**2) / (2.0 * band_ms**2))
    return _unit_draw(subject, trial, salt) < p


def percept(subject: SubjectModel, params: StimulusParams,
            trial: int | None = None) -> Percept:
    """PULSE for durations up to the subject's oscillation onset (inclusive)."""
    onset = _interp_duty(subject.osc_onset_ms, params.duty_cycle_pct)
    is_pulse = params.duration_ms <= onset
    if _flip(subject, trial, "percept", abs(params.duration_ms - onset),
             PERCEPT_NOISE_BAND_MS):
        is_pulse = not is_pulse
    return Percept.PULSE if is_pulse else Percept.OSCILLATION


def _accept_interval(
    subject: SubjectModel, duty_pct: float, direction: Direction | None
) -> tuple[float, float]:
    """Effective acceptance interval in duration, shifted by sweep direction.

    The lower bound also folds in the detectable-width gate expressed as a
    duration at this duty.
    """
    shift = 0.0
    if direction is Direction.INCREASING:
        shift = -subject.sweep_shift_ms / 2.0
    elif direction is Direction.DECREASING:
        shift = subject.sweep_shift_ms / 2.0
    lo = _interp_duty(subject.accept_min_ms, duty_pct) + shift
    hi = _interp_duty(subject.accept_max_ms, duty_pct) + shift
    lo = max(lo, subject.detect_width_ms * 100.0 / duty_pct)
    return lo, hi


def judge(
    subject: SubjectModel,
    params: StimulusParams,
    direction: Direction | None = None,
    trial: int | None = None,
    envelope_um: float | None = None,
) -> bool:
    """Whether the stimulus feels like an acceptable button click.

    Requires a detectable initial pulse width, a duration inside the
    subject's acceptance interval at this duty, and fingertip motion above
    the low-frequency perception threshold.
    """
    if envelope_um is None:
        envelope_um = predicted_envelope_um(params.amplitude_pp_mn / 2.0)
    if envelope_um < PERCEPTION_THRESHOLD_10HZ_UM:
        return False
    lo, hi = _accept_interval(subject, params.duty_cycle_pct, direction)
    ok = (
        lo <= params.duration_ms <= hi
        and params.initial_pulse_width_ms >= subject.detect_width_ms
    )
    dist = min(abs(params.duration_ms - lo), abs(params.duration_ms - hi))
    if _flip(subject, trial, "judge", dist, JUDGE_NOISE_BAND_MS):
        ok = not ok
    return ok


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def rate(
    subject: SubjectModel,
    params: StimulusParams,
    trial: int | None = None,
    envelope_um: float | None = None,
) -> int:
    """0-7 rating: unimodal in initial pulse width, zero for rejected stimuli."""
    if not judge(subject, params, trial=trial, envelope_um=envelope_um):
        return 0
    w = params.initial_pulse_width_ms
    spread = math.exp(
        -((w - subject.preferred_width_ms) ** 2) / (2.0 * subject.rating_tolerance_ms**2)
    )
    return max(1, min(7, _round_half_up(subject.rating_peak * spread)))


# Calibrated roster: (id, group, accept_min{5,25,50}, accept_max{5,25,50},
# sweep shift, osc onset{5,25,50}, detect width, preferred width,
# rating tolerance, rating peak).  Boundaries sit midway between sweep grid
# durations so near-threshold response flips stay rare at presented levels.
_ROSTER_TABLE = (
    ("S01", 1, (41, 11, 1), (141, 61, 41), 10.0, (150, 70, 66), 1.5, 4.5, 1.4, 7.0),
    ("S02", 1, (36, 16, 6), (136, 86, 46), 0.0, (140, 85, 65), 1.8, 5.0, 1.4, 6.8),
    ("S03", 1, (51, 11, 1), (151, 71, 51), 10.0, (155, 75, 64), 1.5, 5.5, 1.5, 7.0),
    ("S04", 1, (56, 16, -4), (166, 136, 56), 20.0, (175, 155, 67), 1.5, 6.0, 1.6, 6.6),
    ("S05", 1, (66, 16, 6), (176, 106, 56), 0.0, (180, 105, 68), 3.3, 6.5, 1.7, 7.0),
    ("S06", 1, (61, 11, 1), (191, 111, 81), 10.0, (195, 115, 95), 1.5, 7.0, 1.8, 6.9),
    ("S07", 2, (26, 6, -4), (156, 96, 46), 20.0, (13, 35, 55), 0.4, 2.0, 1.2, 7.0),
    ("S08", 2, (31, 11, 1), (141, 71, 41), 10.0, (145, 72, 66), 1.3, 2.5, 1.3, 6.5),
    ("S09", 2, (36, 6, -4), (146, 76, 46), 0.0, (148, 76, 64), 1.5, 3.0, 1.3, 6.7),
    ("S10", 3, (66, 16, 6), (196, 76, 36), 0.0, (200, 80, 70), 3.3, 15.0, 3.5, 7.0),
)

DUTY_LEVELS = (5, 25, 50)


def _derive_seed(seed: int, tag: str) -> int:
    digest = hashlib.blake2b(f"{seed}:{tag}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def default_population(seed: int = DEFAULT_ROSTER_SEED) -> tuple[SubjectModel, ...]:
    """Deterministic ten-subject roster (groups 6/3/1) for simulated studies."""
    roster = []
    for sid, group, lo, hi, shift, osc, detect, pw, tol, peak in _ROSTER_TABLE:
        roster.append(
            SubjectModel(
                id=sid,
                group=group,
                detect_width_ms=detect,
                osc_onset_ms=dict(zip(DUTY_LEVELS, (float(v) for v in osc))),
                accept_min_ms=dict(zip(DUTY_LEVELS, (float(v) for v in lo))),
                accept_max_ms=dict(zip(DUTY_LEVELS, (float(v) for v in hi))),
                sweep_shift_ms=shift,
                preferred_width_ms=pw,
                rating_peak=peak,
                rating_tolerance_ms=tol,
                seed=_derive_seed(seed, sid),
            )
        )
    return tuple(roster)


def subject_to_json(subject: SubjectModel) -> dict:
    return {
        "id": subject.id,
        "group": subject.group,
        "detect_width_ms": subject.detect_width_ms,
        "osc_onset_ms": {str(k): v for k, v in sorted(subject.osc_onset_ms.items())},
        "accept_min_ms": {str(k): v for k, v in sorted(subject.accept_min_ms.items())},
        "accept_max_ms": {str(k): v for k, v in sorted(subject.accept_max_ms.items())},
        "sweep_shift_ms": subject.sweep_shift_ms,
        "preferred_width_ms": subject.preferred_width_ms,
        "rating_peak": subject.rating_peak,
        "rating_tolerance_ms": subject.rating_tolerance_ms,
        "judgment_noise": subject.judgment_noise,
        "seed": subject.seed,
    }


def subject_from_json(doc: dict) -> SubjectModel:
    return SubjectModel(
        id=doc["id"],
        group=doc["group"],
        detect_width_ms=doc["detect_width_ms"],
        osc_onset_ms={int(k): float(v) for k, v in doc["osc_onset_ms"].items()},
        accept_min_ms={int(k): float(v) for k, v in doc["accept_min_ms"].items()},
        accept_max_ms={int(k): float(v) for k, v in doc["accept_max_ms"].items()},
        sweep_shift_ms=doc["sweep_shift_ms"],
        preferred_width_ms=doc["preferred_width_ms"],
        rating_peak=doc["rating_peak"],
        rating_tolerance_ms=doc["rating_tolerance_ms"],
        judgment_noise=doc.get("judgment_noise", 0.05),
        seed=doc["seed"],
    )


def roster_to_json(roster) -> dict:
    return {
        "version": ROSTER_SCHEMA_VERSION,
        "subjects": [subject_to_json(s) for s in roster],
    }


def roster_from_json(doc: dict) -> tuple[SubjectModel, ...]:
    if doc.get("version") != ROSTER_SCHEMA_VERSION:
        raise ValueError(f"unsupported roster schema version: {doc.get('version')!r}")
    return tuple(subject_from_json(d) for d in doc["subjects"])


def save_roster(roster, path) -> None:
    with open(path, "w") as fh:
        json.dump(roster_to_json(roster), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_roster(path) -> tuple[SubjectModel, ...]:
    with open(path) as fh:
        return roster_from_json(json.load(fh))


def noiseless(subject: SubjectModel) -> SubjectModel:
    """Copy of the subject with response noise disabled."""
    return replace(subject, judgment_noise=0.0)


class SimulatedSubjectResponder:
    """Adapter presenting a SubjectModel through the session responder contract.

    Keeps a per-session trial counter so noise draws are reproducible and
    uses the sweep direction supplied with each section-1 stimulus.
    """

    def __init__(self, subject: SubjectModel):
        self.subject = subject
        self._trial = 0

    @property
    def id(self) -> str:
        return self.subject.id

    def _next_trial(self) -> int:
        n = self._trial
        self._trial += 1
        return n

    def respond_section1(self, stimulus) -> dict:
        n = self._next_trial()
        direction = Direction(stimulus.direction) if stimulus.direction else None
        params = stimulus.params
        return {
            "acceptable": judge(self.subject, params, direction=direction, trial=n),
            "percept": percept(self.subject, params, trial=n).value,
        }

    def respond_section2(self, stimulus) -> int:
        return rate(self.subject, stimulus.params, trial=self._next_trial())
