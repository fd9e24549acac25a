import numpy as np
import pytest

from crushpool.battery import (
    BIGCRUSH_RANDU_BDS,
    BIGCRUSH_RANDU_SERIAL,
    Family,
    UsageError,
    Verdict,
    battery_spec,
    classify,
    run_sequential,
    run_single_test,
    valid_test_indices,
)
from crushpool.generators import GeneratorKind, GeneratorSpec

ZERO = GeneratorSpec(GeneratorKind.CONSTANT_ZERO)
MINSTD = GeneratorSpec(GeneratorKind.MINSTD, seed=12345)
XS = GeneratorSpec(GeneratorKind.XORSHIFT64STAR, seed=2024)


@pytest.mark.parametrize("name,tests,jobs,code", [
    ("smallcrush", 10, 11, 0),
    ("SmallCrush", 10, 11, 0),
    ("crush", 96, 97, 1),
    ("Crush", 96, 97, 1),
    ("bigcrush", 106, 107, 2),
    ("BigCrush", 106, 107, 2),
])
def test_battery_table(name, tests, jobs, code):
    spec = battery_spec(name)
    assert spec.test_count == tests
    assert spec.job_count == jobs
    assert spec.code == code


def test_battery_spec_is_frozen_and_repeatable():
    assert battery_spec("crush") is battery_spec("CRUSH")


def test_unknown_battery_lists_valid_names():
    with pytest.raises(UsageError, match="smallcrush"):
        battery_spec("mediumcrush")


def test_names_unique_and_indices_dense():
    for name in ("smallcrush", "crush", "bigcrush"):
        spec = battery_spec(name)
        names = [t.name for t in spec.tests]
        assert len(set(names)) == len(names)
        assert [t.index for t in spec.tests] == list(range(1, spec.test_count + 1))


def test_every_family_appears_in_every_battery():
    for name in ("smallcrush", "crush", "bigcrush"):
        families = {t.family for t in battery_spec(name).tests}
        assert families == set(Family)


def test_constant_zero_fails_monobit():
    outcome = run_single_test("smallcrush", 1, ZERO)
    assert outcome.p_value < 1e-10
    assert outcome.verdict is Verdict.FAIL


def test_minstd_passes_monobit_at_smallcrush_scale():
    outcome = run_single_test("smallcrush", 1, MINSTD)
    assert 1e-3 <= outcome.p_value <= 1 - 1e-3


def test_index_out_of_range_messages():
    with pytest.raises(UsageError, match=r"index out of range 1\.\.96"):
        run_single_test("crush", 97, MINSTD)
    with pytest.raises(UsageError, match=r"index out of range 1\.\.96"):
        run_single_test("crush", 0, MINSTD)
    with pytest.raises(UsageError, match=r"index out of range 0\.\.10"):
        run_single_test("smallcrush", 11, MINSTD)


def test_smallcrush_additionally_accepts_index_zero():
    spec = battery_spec("smallcrush")
    assert list(valid_test_indices(spec)) == list(range(0, 11))
    zero_outcome = run_single_test(spec, 0, XS)
    assert zero_outcome.index == 0
    assert zero_outcome.name == spec.tests[0].name
    # same test spec, different job seed: independent outcome
    assert zero_outcome.p_value != run_single_test(spec, 1, XS).p_value


def test_sequential_counts_and_equality():
    outcomes = run_sequential("smallcrush", GeneratorSpec(GeneratorKind.MINSTD, seed=7))
    assert [o.index for o in outcomes] == list(range(1, 11))
    for i, outcome in enumerate(outcomes):
        assert outcome == run_single_test("smallcrush", i + 1, GeneratorSpec(GeneratorKind.MINSTD, seed=7))


def test_constant_zero_fails_all_smallcrush():
    outcomes = run_sequential("smallcrush", ZERO)
    assert all(o.verdict is Verdict.FAIL for o in outcomes)


def test_p_values_within_unit_interval():
    for gen in (ZERO, MINSTD, XS):
        for outcome in run_sequential("smallcrush", gen):
            assert 0.0 <= outcome.p_value <= 1.0


def test_verdict_thresholds():
    assert classify(0.5) is Verdict.PASS
    assert classify(1e-3) is Verdict.PASS
    assert classify(9e-4) is Verdict.SUSPECT
    assert classify(1 - 9e-4) is Verdict.SUSPECT
    assert classify(1e-11) is Verdict.FAIL
    assert classify(1 - 1e-11) is Verdict.FAIL
    assert classify(0.0) is Verdict.FAIL
    assert classify(1.0) is Verdict.FAIL


def test_randu_fails_lattice_tests_at_bigcrush_scale():
    spec = battery_spec("bigcrush")
    randu = GeneratorSpec(GeneratorKind.RANDU, seed=12345)
    for name in (BIGCRUSH_RANDU_BDS, BIGCRUSH_RANDU_SERIAL):
        index = next(t.index for t in spec.tests if t.name == name)
        outcome = run_single_test(spec, index, randu)
        assert outcome.p_value < 1e-6
        assert outcome.verdict is Verdict.FAIL


def test_xorshift_clean_on_smallcrush():
    outcomes = run_sequential("smallcrush", XS)
    assert all(o.verdict is Verdict.PASS for o in outcomes)


def test_outcomes_are_deterministic():
    a = run_sequential("smallcrush", XS)
    b = run_sequential("smallcrush", XS)
    assert a == b


def test_word_budgets_per_battery():
    caps = {"smallcrush": 2**16, "crush": 2**18, "bigcrush": 2**20}
    for name, cap in caps.items():
        for test in battery_spec(name).tests:
            params = dict(test.params)
            if test.family in (Family.MONOBIT_FREQUENCY, Family.RUNS, Family.GAP):
                words = params["n"]
            elif test.family is Family.BLOCK_FREQUENCY:
                words = params["blocks"] * params["m"] / 32
            elif test.family is Family.COLLISION:
                words = params["n"] + 1
            elif test.family is Family.BIRTHDAY_SPACINGS:
                words = params["n"] * params["t"] + 1
            else:
                words = params["n"] * params["t"]
            assert words <= cap, (name, test.name)


def test_gap_never_hitting_interval_fails():
    # the zero stream never lands in [0.375, 0.625): degenerate, flagged
    outcome = run_single_test("smallcrush", 10, ZERO)
    assert outcome.p_value == 0.0
    assert outcome.verdict is Verdict.FAIL


def test_samples_used_reported():
    outcome = run_single_test("smallcrush", 1, XS)
    assert outcome.samples_used == 65536
    outcome = run_single_test("smallcrush", 7, XS)
    assert outcome.samples_used == 8193  # one extra word feeds the randomized tail
