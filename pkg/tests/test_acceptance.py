"""Acceptance criteria 1-9, each at its stated tolerance and time budget.

Run with ``pytest -s tests/test_acceptance.py`` to see one line per criterion
as it finishes; the lines are repeated in the terminal summary either way.
"""
import time

import pytest

from rsrvos import checks

LINES: list[str] = []
_START: list[float] = []


@pytest.fixture(autouse=True, scope="module")
def _clock():
    _START.append(time.perf_counter())


def _record(result: checks.CheckResult):
    line = result.line()
    LINES.append(line)
    print(line)
    assert result.ok, line


@pytest.fixture(scope="module")
def occlusion():
    return checks.occlusion_runs()


def test_criterion_1_metric_oracle():
    _record(checks.check_metric_oracle())


def test_criterion_2_attention_oracle():
    _record(checks.check_attention_oracle())


def test_criterion_3_calibration_recovery():
    _record(checks.check_tmcc_recovery())


def test_criterion_4_memory_invariants():
    _record(checks.check_memory_invariants())


def test_criterion_5_ablation_direction(occlusion):
    _record(checks.check_ablation(occlusion))


def test_criterion_6_occlusion_relock(occlusion):
    _record(checks.check_relock(occlusion))


def test_criterion_7_vds_and_slow_motion():
    _record(checks.check_vds_and_slow_motion())


def test_criterion_8_causality():
    _record(checks.check_causality())


def test_criterion_9_performance():
    _record(checks.check_performance())


def test_total_budget():
    total = time.perf_counter() - _START[0]
    line = f"[{'PASS' if total < 900 else 'FAIL'}] acceptance total {total:.1f}s / 900s"
    LINES.append(line)
    print(line)
    assert total < 900
