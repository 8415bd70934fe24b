import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clicksim.protocol import (
    AcceptRegion,
    BlockPlan,
    Direction,
    ExperimentSession,
    PhaseError,
    SessionRecord,
    TrialRecord,
    extract_boundaries,
    plan_round1,
    plan_round2,
    plan_round3,
    plan_section1,
    run_session,
    sweep_durations,
)
from clicksim.subject import SimulatedSubjectResponder, default_population

POP = default_population(7)


def _s1_record(duty, duration, direction, acceptable, responder="X", token="t"):
    return TrialRecord(
        token=token,
        section=1,
        duty_pct=duty,
        duration_ms=float(duration),
        presentation=0,
        responder_id=responder,
        t=0.0,
        block=0,
        direction=direction,
        acceptable=acceptable,
        percept="PULSE",
    )


def test_sweep_durations_increasing():
    durations = sweep_durations(Direction.INCREASING)
    assert durations[0] == 1
    assert durations[:3] == (1, 11, 21)
    assert durations[-1] == 251
    assert len(durations) == 26


def test_sweep_durations_decreasing_is_reverse():
    assert sweep_durations(Direction.DECREASING) == sweep_durations(Direction.INCREASING)[::-1]


def test_plan_section1_structure():
    blocks = plan_section1(3)
    assert len(blocks) == 6
    combos = {(b.duty_pct, b.direction) for b in blocks}
    assert len(combos) == 6
    for duty in (5, 25, 50):
        assert sum(1 for b in blocks if b.duty_pct == duty) == 2


def test_plan_section1_seeded_shuffle():
    assert plan_section1(3) == plan_section1(3)
    orders = {tuple((b.duty_pct, b.direction.value) for b in plan_section1(s)) for s in range(8)}
    assert len(orders) > 1


def test_block_plan_rejects_wrong_durations():
    with pytest.raises(ValueError):
        BlockPlan(5, Direction.INCREASING, (1, 2, 3))


def test_extract_boundaries_hand_example():
    # Increasing sweep first accepts 71; decreasing first accepts 81.
    trials = []
    for d in range(1, 252, 10):
        trials.append(_s1_record(25, d, "INCREASING", acceptable=71 <= d <= 131))
    for d in range(251, 0, -10):
        trials.append(_s1_record(25, d, "DECREASING", acceptable=81 <= d <= 141))
    region = extract_boundaries(trials)
    assert region.get(25) == (76.0, 136.0)


def test_extract_boundaries_all_no_is_empty():
    trials = [_s1_record(25, d, "INCREASING", acceptable=False) for d in range(1, 252, 10)]
    region = extract_boundaries(trials)
    assert region.get(25) is None
    assert region.duties() == []


def test_extract_boundaries_filters_responder():
    trials = [
        _s1_record(25, 51, "INCREASING", True, responder="A"),
        _s1_record(25, 101, "INCREASING", True, responder="B"),
    ]
    region = extract_boundaries(trials, responder_id="A")
    assert region.get(25) == (51.0, 51.0)


def test_accept_region_invariant():
    with pytest.raises(ValueError):
        AcceptRegion(bounds={25: (50.0, 40.0)})


def test_plan_round1_worked_example():
    assert plan_round1((10.0, 170.0)) == [10, 50, 90, 130, 170]


def test_plan_round1_small_span():
    assert plan_round1((0.0, 4.0)) == [0, 1, 2, 3, 4]


def test_plan_round1_degenerate():
    assert plan_round1((20.0, 20.0)) == [20]


def test_plan_round2_worked_example():
    r1 = [10, 50, 90, 130, 170]
    assert plan_round2(90, r1) == [60, 70, 80, 90, 100, 110, 120]


def test_plan_round2_at_lower_edge():
    r1 = [10, 50, 90, 130, 170]
    assert plan_round2(10, r1) == [10, 20, 30, 40]


def test_plan_round2_tight_neighbors():
    assert plan_round2(90, [80, 90, 100]) == [90]


def test_plan_round2_requires_membership():
    with pytest.raises(ValueError):
        plan_round2(85, [10, 50, 90])


def test_plan_round3_worked_example():
    r2 = [60, 70, 80, 90, 100, 110, 120]
    assert plan_round3(70, r2) == [65, 70, 75]


def test_plan_round3_floor_clamp():
    assert plan_round3(1) == [1, 6]


def test_plan_round3_ceiling_clamp():
    assert plan_round3(251) == [246, 251]


def test_run_session_deterministic(study_records):
    responder = SimulatedSubjectResponder(POP[0])
    record = run_session(
        responder,
        seed=study_records[0].seed,
        session_id=study_records[0].session_id,
    )
    assert record.dumps() == study_records[0].dumps()


def test_session_trial_counts(study_records):
    for record in study_records:
        s1 = [t for t in record.trials if t.section == 1]
        assert len(s1) == 6 * 26
        # Each (duty, duration) pair probed exactly twice, once per direction.
        seen = {}
        for t in s1:
            seen.setdefault((t.duty_pct, t.duration_ms), []).append(t.direction)
        assert all(sorted(v) == ["DECREASING", "INCREASING"] for v in seen.values())
        assert len(seen) == 3 * 26


def test_session_worked_example_counts():
    # A one-duty region with interior bests costs 5x3 + 7x3 + 3x3 ratings.
    class Scripted:
        id = "scripted"

        def respond_section1(self, stim):
            ok = stim.duty_pct == 25 and 11 <= stim.duration_ms <= 171
            return {"acceptable": ok, "percept": "PULSE"}

        def respond_section2(self, stim):
            targets = {1: 91, 2: 71, 3: 71}
            return 7 if stim.duration_ms == targets[stim.round_no] else 3

    record = run_session(Scripted(), seed=0, session_id="worked")
    assert record.regions.get(25) == (11.0, 171.0)
    assert record.round_plans[25]["round1"] == [11, 51, 91, 131, 171]
    assert record.round_plans[25]["round2"] == [61, 71, 81, 91, 101, 111, 121]
    assert record.round_plans[25]["round3"] == [66, 71, 76]
    s2 = [t for t in record.trials if t.section == 2]
    assert len(s2) == (5 + 7 + 3) * 3 == 45
    assert record.bests[25] == {"round1": 91, "round2": 71, "round3": 71, "final": 71}


def test_round_durations_never_rerated(study_records):
    for record in study_records:
        for duty, plans in record.round_plans.items():
            r1 = set(plans.get("round1", []))
            r2 = set(plans.get("round2", []))
            r3 = set(plans.get("round3", []))
            assert len(r1 & r2) <= 1  # only the round-1 best is re-rated
            assert len((r1 | r2) & r3) <= 1


def test_all_planned_durations_in_range(study_records):
    for record in study_records:
        for plans in record.round_plans.values():
            for durations in plans.values():
                assert all(1 <= d <= 251 for d in durations)
        for t in record.trials:
            assert 1 <= t.duration_ms <= 251


def test_ties_break_toward_shorter_duration():
    class FlatRater:
        id = "flat"

        def respond_section1(self, stim):
            ok = stim.duty_pct == 25 and 41 <= stim.duration_ms <= 81
            return {"acceptable": ok, "percept": "PULSE"}

        def respond_section2(self, stim):
            return 5

    record = run_session(FlatRater(), seed=1)
    assert record.bests[25]["round1"] == 41
    assert record.bests[25]["final"] == min(
        min(p) for p in record.round_plans[25].values()
    )


def test_phase_errors():
    session = ExperimentSession(seed=5)
    with pytest.raises(PhaseError) as err:
        session.submit({"rating": 5})
    assert "section1" in str(err.value)
    session.submit({"acceptable": True, "percept": "PULSE"})
    with pytest.raises(PhaseError):
        session.submit({"acceptable": True, "percept": "SOMETHING"})


def test_phase_error_after_completion():
    class NoSayer:
        id = "no"

        def respond_section1(self, stim):
            return {"acceptable": False, "percept": "PULSE"}

        def respond_section2(self, stim):
            return 0

    record = run_session(NoSayer(), seed=2)
    assert record.complete
    assert record.regions.duties() == []
    session = ExperimentSession.from_record(record)
    with pytest.raises(PhaseError):
        session.submit({"rating": 1})


def test_session_record_roundtrip(study_records):
    record = study_records[0]
    clone = SessionRecord.from_json_dict(record.to_json_dict())
    assert clone.dumps() == record.dumps()


def test_session_record_regions_recompute(study_records):
    for record in study_records:
        assert record.recompute_regions().bounds == record.regions.bounds


def test_replay_reproduces_cursor(study_records):
    record = study_records[0]
    # Replay a truncated record, then feed the remaining responses; the
    # final record must match the original run exactly.
    partial = SessionRecord.from_json_dict(record.to_json_dict())
    partial.trials = partial.trials[:100]
    session = ExperimentSession.from_record(partial)
    pending = session.next_stimulus()
    assert pending.ordinal == 100
    for stored in record.trials[100:]:
        if stored.section == 1:
            session.submit({"acceptable": stored.acceptable, "percept": stored.percept})
        else:
            session.submit({"rating": stored.rating})
    assert session.record().dumps() == record.dumps()


def test_trials_csv_header(study_records):
    rows = study_records[0].trials_csv_rows()
    assert rows[0] == "subject,section,block,duty_pct,duration_ms,direction,answer1,answer2,rating"
    assert len(rows) == len(study_records[0].trials) + 1


@settings(max_examples=60, deadline=None)
@given(
    lo=st.integers(1, 240),
    span=st.integers(1, 120),
    best_idx=st.integers(0, 4),
)
def test_round_plan_properties(lo, span, best_idx):
    hi = min(251, lo + span)
    r1 = plan_round1((float(lo), float(hi)))
    assert all(1 <= d <= 251 for d in r1)
    assert r1[0] == lo and r1[-1] == hi
    best = sorted(set(r1))[min(best_idx, len(set(r1)) - 1)]
    r2 = plan_round2(best, r1)
    assert best in r2
    assert all(1 <= d <= 251 for d in r2)
    others = [d for d in set(r1) if d != best]
    assert all(d not in r2 for d in others)
    for best2 in r2:
        r3 = plan_round3(best2, r2)
        assert best2 in r3
        assert all(1 <= d <= 251 for d in r3)
        r2_others = [d for d in r2 if d != best2]
        assert all(d not in r3 for d in r2_others)
