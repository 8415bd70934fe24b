#!/usr/bin/env python3
"""Recalibrate fingertip stiffness against the beat-band envelope target.

Bisects stiffness with mass and damping held at their defaults until the
measured low-frequency displacement envelope (full pipeline: beat drive,
trace, band-pass) hits the target.  The frozen constant in
clicksim.device.FINGER_STIFFNESS_N_PER_M came from this script; rerun it
after touching the mechanics, the integrator or the envelope estimator.
"""

from clicksim.device import (
    ENVELOPE_TARGET_UM,
    FingerMech,
    calibrate_stiffness,
    displacement_envelope,
    run_beat_drive,
    single_finger_state,
)


def main() -> None:
    k = calibrate_stiffness()
    state = single_finger_state(mech=FingerMech(stiffness_n_m=k))
    trace = run_beat_drive(state, duration_s=2.0)
    measured = displacement_envelope(trace, "index", 10.0)
    print(f"calibrated stiffness: {k!r} N/m")
    print(f"measured envelope:    {measured:.3f} um (target {ENVELOPE_TARGET_UM} um)")
    print("paste the stiffness into clicksim.device.FINGER_STIFFNESS_N_PER_M")


if __name__ == "__main__":
    main()
