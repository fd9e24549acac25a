"""The three crush batteries and the statistical test families behind them.

Batteries are sized to the classic shape (SmallCrush 10 tests / 11 jobs,
Crush 96 / 97, BigCrush 106 / 107) but each test runs at desk scale: a
SmallCrush test consumes at most 2^16 words, Crush 2^18, BigCrush 2^20.
Eight families are instantiated with varying parameters to fill the tables;
the instantiation grid lives at the bottom of this module and is frozen.

Every test constructs a fresh generator seeded by its own test index, so a
battery run is identical whether the tests execute sequentially in one
process or as independent jobs on a pool.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import pvalues
from .generators import GeneratorInstance, GeneratorSpec, make_generator

FAIL_THRESHOLD = 1e-10
SUSPECT_THRESHOLD = 1e-3

_WORD_SCALE = 2.0 ** -32


class UsageError(ValueError):
    """Bad battery name or test index."""


class Family(Enum):
    MONOBIT_FREQUENCY = "MonobitFrequency"
    BLOCK_FREQUENCY = "BlockFrequency"
    RUNS = "Runs"
    GAP = "Gap"
    SERIAL_PAIRS = "SerialPairs"
    BIRTHDAY_SPACINGS = "BirthdaySpacings"
    COLLISION = "CollisionTest"
    MAX_OF_T = "MaxOfT"


class Verdict(Enum):
    PASS = "PASS"
    SUSPECT = "SUSPECT"
    FAIL = "FAIL"


@dataclass(frozen=True)
class TestSpec:
    index: int
    family: Family
    name: str
    params: tuple[tuple[str, float], ...]

    def param(self, key: str) -> float:
        for k, v in self.params:
            if k == key:
                return v
        raise KeyError(key)


@dataclass(frozen=True)
class TestOutcome:
    index: int
    name: str
    statistic: float
    p_value: float
    verdict: Verdict
    samples_used: int


@dataclass(frozen=True)
class BatterySpec:
    name: str          # display name: SmallCrush / Crush / BigCrush
    code: int          # battery code makesub passes to every job
    tests: tuple[TestSpec, ...]

    @property
    def test_count(self) -> int:
        return len(self.tests)

    @property
    def job_count(self) -> int:
        return self.test_count + 1

    def test_for_index(self, index: int) -> TestSpec:
        """Test addressed by a run index; index 0 aliases the first test.

        Index 0 only runs as SmallCrush's job 0, which carries the global
        header plus a body for the battery's first test (reseeded for job
        index 0). Crush and BigCrush job 0 is header-only and never reaches
        this path.
        """
        if index == 0:
            return self.tests[0]
        return self.tests[index - 1]


def classify(p_value: float) -> Verdict:
    """Two-sided verdict: extreme p on either side is flagged."""
    if p_value < FAIL_THRESHOLD or p_value > 1.0 - FAIL_THRESHOLD:
        return Verdict.FAIL
    if p_value < SUSPECT_THRESHOLD or p_value > 1.0 - SUSPECT_THRESHOLD:
        return Verdict.SUSPECT
    return Verdict.PASS


def battery_spec(name: str) -> BatterySpec:
    """Look up a battery by its makesub spelling (case-insensitive)."""
    key = name.lower()
    spec = _BATTERIES.get(key)
    if spec is None:
        valid = ", ".join(sorted(_BATTERIES))
        raise UsageError(f"unknown battery {name!r} (valid: {valid})")
    return spec


def valid_test_indices(spec: BatterySpec) -> range:
    """Indices accepted by run_single_test; SmallCrush additionally takes 0."""
    if spec.code == 0:
        return range(0, spec.test_count + 1)
    return range(1, spec.test_count + 1)


def run_single_test(battery: str | BatterySpec, test_index: int, gen_spec: GeneratorSpec) -> TestOutcome:
    """Run one test with a fresh generator seeded by the test index."""
    spec = battery if isinstance(battery, BatterySpec) else battery_spec(battery)
    indices = valid_test_indices(spec)
    if test_index not in indices:
        raise UsageError(
            f"index out of range {indices.start}..{indices.stop - 1} for {spec.name}: {test_index}"
        )
    test = spec.test_for_index(test_index)
    gen = make_generator(gen_spec, job_index=test_index)
    statistic, p_value, samples = _FAMILY_RUNNERS[test.family](gen, dict(test.params))
    return TestOutcome(
        index=test_index,
        name=test.name,
        statistic=statistic,
        p_value=p_value,
        verdict=classify(p_value),
        samples_used=samples,
    )


def run_sequential(battery: str | BatterySpec, gen_spec: GeneratorSpec) -> list[TestOutcome]:
    """The whole battery in order, one fresh generator per test."""
    spec = battery if isinstance(battery, BatterySpec) else battery_spec(battery)
    return [run_single_test(spec, i, gen_spec) for i in range(1, spec.test_count + 1)]


def p_value_chi_square(statistic: float, dof: int) -> float:
    """Upper-tail chi-square probability (thin alias kept at module level)."""
    return pvalues.chi_square_upper(statistic, dof)


# ---------------------------------------------------------------------------
# test families


def _bits_of(words: np.ndarray) -> np.ndarray:
    """MSB-first bit stream of a word array."""
    return np.unpackbits(words.astype(">u4").view(np.uint8))


def _rand_unit(gen: GeneratorInstance) -> float:
    """One stream-derived uniform in (0,1) for sub-randomized discrete tails."""
    return (int(gen.next_words(1)[0]) + 0.5) * _WORD_SCALE


def _monobit(gen, p):
    n = int(p["n"])
    ones = int(np.bitwise_count(gen.next_words(n)).sum())
    nbits = 32 * n
    statistic = (2.0 * ones - nbits) ** 2 / nbits
    return statistic, pvalues.chi_square_upper(statistic, 1), n


def _block_frequency(gen, p):
    blocks, m = int(p["blocks"]), int(p["m"])
    n_words = blocks * m // 32
    pi = _bits_of(gen.next_words(n_words)).reshape(blocks, m).mean(axis=1)
    statistic = 4.0 * m * float(((pi - 0.5) ** 2).sum())
    return statistic, pvalues.chi_square_upper(statistic, blocks), n_words


def _runs(gen, p):
    n = int(p["n"])
    bits = _bits_of(gen.next_words(n))
    nbits = len(bits)
    pi = float(bits.mean())
    if abs(pi - 0.5) >= 2.0 / math.sqrt(nbits):
        return 0.0, 0.0, n  # monobit precondition failed; runs count is meaningless
    v = 1 + int((bits[1:] != bits[:-1]).sum())
    statistic = abs(v - 2.0 * nbits * pi * (1.0 - pi)) / (
        2.0 * math.sqrt(2.0 * nbits) * pi * (1.0 - pi)
    )
    return statistic, math.erfc(statistic), n


def _gap(gen, p):
    n, lo, hi, t = int(p["n"]), float(p["lo"]), float(p["hi"]), int(p["t"])
    u = gen.next_words(n).astype(np.float64) * _WORD_SCALE
    pos = np.flatnonzero((u >= lo) & (u < hi))
    if len(pos) == 0:
        return 0.0, 0.0, n  # the marked interval was never hit
    gaps = np.concatenate([[pos[0]], np.diff(pos) - 1])
    clipped = np.minimum(gaps, t).astype(np.int64)
    counts = np.bincount(clipped, minlength=t + 1)
    hit = hi - lo
    probs = np.array([hit * (1.0 - hit) ** r for r in range(t)] + [(1.0 - hit) ** t])
    expected = len(pos) * probs
    statistic = float(((counts - expected) ** 2 / expected).sum())
    return statistic, pvalues.chi_square_upper(statistic, t), n


def _serial(gen, p):
    n, t, b = int(p["n"]), int(p["t"]), int(p["b"])
    values = (gen.next_words(n * t) >> np.uint32(32 - b)).astype(np.int64).reshape(n, t)
    index = np.zeros(n, dtype=np.int64)
    for col in range(t):
        index = (index << b) | values[:, col]
    cells = 1 << (b * t)
    counts = np.bincount(index, minlength=cells)
    expected = n / cells
    statistic = float(((counts - expected) ** 2 / expected).sum())
    return statistic, pvalues.chi_square_upper(statistic, cells - 1), n * t


def _birthday_spacings(gen, p):
    n, t, b = int(p["n"]), int(p["t"]), int(p["b"])
    values = (gen.next_words(n * t) >> np.uint32(32 - b)).astype(np.int64).reshape(n, t)
    birthdays = np.zeros(n, dtype=np.int64)
    for col in range(t):
        birthdays = (birthdays << b) | values[:, col]
    birthdays.sort()
    spacings = np.diff(birthdays)
    collisions = (n - 1) - len(np.unique(spacings))
    days = 1 << (b * t)
    lam = n**3 / (4.0 * days)
    p_value = pvalues.poisson_randomized_upper(collisions, lam, _rand_unit(gen))
    return float(collisions), p_value, n * t + 1


def _collision(gen, p):
    n, b = int(p["n"]), int(p["b"])
    values = gen.next_words(n) >> np.uint32(32 - b)
    collisions = n - len(np.unique(values))
    p_value = pvalues.collision_randomized_upper(collisions, n, 1 << b, _rand_unit(gen))
    return float(collisions), p_value, n + 1


def _max_of_t(gen, p):
    n, t, cells = int(p["n"]), int(p["t"]), int(p["cells"])
    u = gen.next_words(n * t).astype(np.float64) * _WORD_SCALE
    top = u.reshape(n, t).max(axis=1) ** t  # uniform on [0,1) under the null
    index = np.minimum((top * cells).astype(np.int64), cells - 1)
    counts = np.bincount(index, minlength=cells)
    expected = n / cells
    statistic = float(((counts - expected) ** 2 / expected).sum())
    return statistic, pvalues.chi_square_upper(statistic, cells - 1), n * t


_FAMILY_RUNNERS = {
    Family.MONOBIT_FREQUENCY: _monobit,
    Family.BLOCK_FREQUENCY: _block_frequency,
    Family.RUNS: _runs,
    Family.GAP: _gap,
    Family.SERIAL_PAIRS: _serial,
    Family.BIRTHDAY_SPACINGS: _birthday_spacings,
    Family.COLLISION: _collision,
    Family.MAX_OF_T: _max_of_t,
}


# ---------------------------------------------------------------------------
# frozen instantiation tables


def _monobit_spec(n):
    return (Family.MONOBIT_FREQUENCY, f"MonobitFrequency n={n}", (("n", n),))


def _blockfreq_spec(blocks, m):
    return (Family.BLOCK_FREQUENCY, f"BlockFrequency blocks={blocks} m={m}",
            (("blocks", blocks), ("m", m)))


def _runs_spec(n):
    return (Family.RUNS, f"Runs n={n}", (("n", n),))


def _gap_spec(lo, hi, t, n):
    return (Family.GAP, f"Gap [{lo:.3f},{hi:.3f}) t={t} n={n}",
            (("lo", lo), ("hi", hi), ("t", t), ("n", n)))


def _serial_spec(t, b, n):
    return (Family.SERIAL_PAIRS, f"SerialPairs t={t} b={b} n={n}",
            (("t", t), ("b", b), ("n", n)))


def _bds_spec(t, b, n):
    return (Family.BIRTHDAY_SPACINGS, f"BirthdaySpacings t={t} b={b} n={n}",
            (("t", t), ("b", b), ("n", n)))


def _collision_spec(b, n):
    return (Family.COLLISION, f"CollisionTest b={b} n={n}", (("b", b), ("n", n)))


def _maxt_spec(t, n, cells):
    return (Family.MAX_OF_T, f"MaxOfT t={t} d={cells} n={n}",
            (("t", t), ("n", n), ("cells", cells)))


_SMALLCRUSH_TABLE = [
    _monobit_spec(65536),
    _blockfreq_spec(512, 128),
    _runs_spec(32768),
    _gap_spec(0.0, 0.25, 8, 65536),
    _serial_spec(2, 6, 32768),
    _bds_spec(1, 30, 4096),
    _collision_spec(19, 8192),
    _maxt_spec(8, 8192, 64),
    _serial_spec(3, 4, 16384),
    _gap_spec(0.375, 0.625, 10, 65536),
]

# indices (1-based) of the canonical per-family instances used for
# null-uniformity checks
SMALLCRUSH_FAMILY_CANON = {
    Family.MONOBIT_FREQUENCY: 1,
    Family.BLOCK_FREQUENCY: 2,
    Family.RUNS: 3,
    Family.GAP: 4,
    Family.SERIAL_PAIRS: 5,
    Family.BIRTHDAY_SPACINGS: 6,
    Family.COLLISION: 7,
    Family.MAX_OF_T: 8,
}

_CRUSH_TABLE = (
    [_monobit_spec(n) for n in (8192, 16384, 32768, 65536, 131072, 262144)]
    + [_blockfreq_spec(b, m) for b, m in (
        (256, 64), (256, 128), (256, 256), (512, 128), (512, 256),
        (512, 512), (1024, 64), (1024, 128), (1024, 256), (2048, 128))]
    + [_runs_spec(n) for n in (8192, 16384, 32768, 65536, 131072, 262144)]
    + [_gap_spec(lo, hi, t, 131072) for t in (8, 12) for lo, hi in (
        (0.0, 0.25), (0.25, 0.5), (0.5, 0.75), (0.75, 1.0), (0.0, 0.5), (0.375, 0.625))]
    + [_serial_spec(t, b, n) for t, b, n in (
        (2, 4, 16384), (2, 4, 65536), (2, 5, 32768), (2, 5, 131072),
        (2, 6, 32768), (2, 6, 131072), (2, 7, 65536), (2, 7, 131072),
        (2, 8, 131072), (3, 3, 16384), (3, 4, 16384), (3, 4, 32768),
        (3, 4, 65536), (3, 5, 32768), (3, 5, 65536), (4, 3, 32768),
        (4, 3, 65536), (4, 4, 32768), (4, 4, 65536), (5, 3, 49152))]
    + [_bds_spec(t, b, n) for t, b, n in (
        (1, 24, 1024), (1, 26, 2048), (1, 28, 4096), (1, 30, 4096),
        (1, 31, 8192), (1, 32, 8192), (2, 14, 2048), (2, 15, 4096),
        (2, 16, 8192), (2, 17, 16384), (3, 8, 1024), (3, 9, 2048),
        (3, 10, 4096), (3, 10, 8192), (4, 7, 2048), (4, 8, 4096))]
    + [_collision_spec(b, n) for b, n in (
        (16, 2048), (16, 4096), (17, 4096), (17, 8192), (18, 4096),
        (18, 8192), (19, 8192), (19, 16384), (20, 8192), (20, 16384),
        (21, 16384), (21, 32768), (22, 32768), (22, 65536))]
    + [_maxt_spec(t, n, c) for t, n, c in (
        (4, 8192, 64), (4, 16384, 128), (8, 8192, 64), (8, 16384, 128),
        (8, 32768, 256), (12, 8192, 64), (12, 16384, 128), (16, 4096, 32),
        (16, 8192, 64), (16, 16384, 128), (24, 4096, 64), (32, 8192, 128))]
)

_BIGCRUSH_TABLE = (
    [_monobit_spec(n) for n in (32768, 65536, 131072, 262144, 524288, 1048576)]
    + [_blockfreq_spec(b, m) for b, m in (
        (256, 256), (256, 512), (512, 256), (512, 512), (512, 1024),
        (1024, 256), (1024, 512), (1024, 1024), (2048, 256), (2048, 512),
        (4096, 128), (4096, 256))]
    + [_runs_spec(n) for n in (32768, 65536, 131072, 262144, 524288, 1048576)]
    + [_gap_spec(lo, hi, t, 524288) for t in (8, 12) for lo, hi in (
        (0.0, 0.25), (0.25, 0.5), (0.5, 0.75), (0.75, 1.0), (0.0, 0.5), (0.375, 0.625))]
    + [_gap_spec(0.0, 0.125, 16, 524288), _gap_spec(0.0, 0.5, 6, 1048576)]
    + [_serial_spec(t, b, n) for t, b, n in (
        (2, 4, 131072), (2, 4, 524288), (2, 5, 131072), (2, 5, 524288),
        (2, 6, 131072), (2, 6, 524288), (2, 7, 262144), (2, 7, 524288),
        (2, 8, 262144), (2, 8, 524288), (3, 3, 131072), (3, 4, 65536),
        (3, 4, 262144), (3, 5, 131072), (3, 5, 262144), (3, 6, 262144),
        (4, 3, 131072), (4, 4, 131072), (4, 4, 262144), (5, 3, 131072),
        (5, 3, 196608), (8, 2, 131072))]
    + [_bds_spec(t, b, n) for t, b, n in (
        (1, 26, 2048), (1, 28, 4096), (1, 30, 8192), (1, 31, 8192),
        (1, 32, 16384), (2, 14, 4096), (2, 15, 4096), (2, 16, 8192),
        (2, 17, 16384), (2, 18, 32768), (3, 9, 2048), (3, 10, 4096),
        (3, 10, 8192), (3, 11, 8192), (4, 8, 8192), (4, 8, 16384),
        (5, 6, 4096), (6, 5, 4096))]
    + [_collision_spec(b, n) for b, n in (
        (18, 8192), (18, 16384), (19, 8192), (19, 16384), (20, 16384),
        (20, 32768), (21, 16384), (21, 32768), (21, 65536), (22, 32768),
        (22, 65536), (23, 65536), (24, 65536), (24, 131072))]
    + [_maxt_spec(t, n, c) for t, n, c in (
        (4, 16384, 128), (4, 32768, 256), (8, 16384, 128), (8, 32768, 256),
        (8, 65536, 256), (12, 16384, 128), (12, 32768, 256), (16, 16384, 128),
        (16, 32768, 256), (16, 65536, 512), (24, 8192, 128), (24, 16384, 256),
        (32, 8192, 128), (32, 16384, 256))]
)

# BigCrush instances known to expose RANDU's 3-D lattice defect
BIGCRUSH_RANDU_BDS = "BirthdaySpacings t=3 b=10 n=4096"
BIGCRUSH_RANDU_SERIAL = "SerialPairs t=3 b=5 n=262144"


def _freeze(name: str, code: int, table) -> BatterySpec:
    tests = tuple(
        TestSpec(index=i + 1, family=family, name=test_name, params=params)
        for i, (family, test_name, params) in enumerate(table)
    )
    names = [t.name for t in tests]
    if len(set(names)) != len(names):
        raise AssertionError(f"duplicate test names in {name}")
    return BatterySpec(name=name, code=code, tests=tests)


_BATTERIES = {
    "smallcrush": _freeze("SmallCrush", 0, _SMALLCRUSH_TABLE),
    "crush": _freeze("Crush", 1, _CRUSH_TABLE),
    "bigcrush": _freeze("BigCrush", 2, _BIGCRUSH_TABLE),
}

assert _BATTERIES["smallcrush"].test_count == 10
assert _BATTERIES["crush"].test_count == 96
assert _BATTERIES["bigcrush"].test_count == 106
