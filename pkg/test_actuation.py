import pytest

from actuation import (
    ActuationLog,
    MotorSpec,
    from_mm,
    move_time,
    parallel_move_time,
    quantize_length,
    record_dwell,
    record_move,
    record_parallel_move,
    sweep_time,
    to_mm,
)
from errors import DomainError


def test_full_unroll_takes_about_22_seconds():
    assert move_time(0.14) == pytest.approx(22.28, abs=0.01)
    assert move_time(-0.14) == move_time(0.14)


def test_sweep_time_example():
    assert sweep_time(0.05, 0.09, 5, 0.5) == pytest.approx(8.87, abs=0.01)


def test_fast_motor_is_four_times_quicker():
    assert move_time(0.14, MotorSpec.fast()) == pytest.approx(0.25 * move_time(0.14), rel=1e-12)


def test_sweep_needs_a_stop():
    with pytest.raises(DomainError):
        sweep_time(0.05, 0.09, 0, 0.5)


def test_motor_parameters_must_be_positive():
    with pytest.raises(DomainError):
        MotorSpec(rpm=0)


def test_parallel_moves_cost_the_slowest():
    assert parallel_move_time([0.01, 0.04, -0.02]) == move_time(0.04)
    assert parallel_move_time([]) == 0.0


def test_quantization():
    assert to_mm(0.0654) == 65
    assert from_mm(65) == 0.065
    assert quantize_length(0.0654) == 0.065
    assert quantize_length(0.0674, 0.005) == 0.065
    assert quantize_length(0.0676, 0.005) == 0.07


def test_log_accounting():
    log = ActuationLog()
    record_move(log, 3, 0.01, 0.06)
    record_parallel_move(log, {1: (0.01, 0.05), 2: (0.01, 0.09), 4: (0.02, 0.02)})
    record_dwell(log, 0.5)
    assert log.move_count == 3
    assert log.travel == pytest.approx({3: 0.05, 1: 0.04, 2: 0.08})
    assert log.motion_s == pytest.approx(move_time(0.05) + move_time(0.08))
    assert log.elapsed_s == pytest.approx(log.motion_s + 0.5)
    assert log.total_travel == pytest.approx(0.17)


def test_negative_dwell_rejected():
    with pytest.raises(DomainError):
        record_dwell(ActuationLog(), -1.0)


def test_rescaled_log_keeps_dwell():
    log = ActuationLog()
    record_move(log, 0, 0.01, 0.15)
    record_dwell(log, 2.0)
    quick = log.rescaled(MotorSpec(), MotorSpec.fast())
    assert quick.motion_s == pytest.approx(0.25 * log.motion_s, rel=1e-12)
    assert quick.dwell_s == log.dwell_s
    assert quick.travel == log.travel
    assert quick.travel is not log.travel


def test_notes_are_kept():
    log = ActuationLog()
    log.note("group gained together")
    assert log.events == ["group gained together"]
