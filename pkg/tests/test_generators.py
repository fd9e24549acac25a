import numpy as np
import pytest

from crushpool.generators import (
    GOLDEN_GAMMA,
    MASK64,
    MINSTD_MODULUS,
    MINSTD_MULTIPLIER,
    RANDU_MODULUS,
    RANDU_MULTIPLIER,
    XORSHIFT_MULTIPLIER,
    ConfigurationError,
    GeneratorKind,
    GeneratorSpec,
    _LcgStream,
    effective_seed_for,
    lcg_step,
    make_generator,
    mix_seed,
    parse_generator,
    splitmix64,
    xorshift64star_step,
)


def test_minstd_first_raw_step_is_multiplier():
    assert lcg_step(1, MINSTD_MULTIPLIER, MINSTD_MODULUS) == 16807


def test_randu_constants():
    assert RANDU_MULTIPLIER == 65539
    assert RANDU_MODULUS == 2**31
    assert lcg_step(1, RANDU_MULTIPLIER, RANDU_MODULUS) == 65539


def test_minstd_first_word_follows_recurrence():
    # word 0 packs the top 16 bits of the first two states after seed 1
    stream = _LcgStream(GeneratorSpec(GeneratorKind.MINSTD), 1, MINSTD_MULTIPLIER, MINSTD_MODULUS)
    s1 = lcg_step(1, MINSTD_MULTIPLIER, MINSTD_MODULUS)
    s2 = lcg_step(s1, MINSTD_MULTIPLIER, MINSTD_MODULUS)
    expected = ((s1 >> 15) & 0xFFFF) << 16 | ((s2 >> 15) & 0xFFFF)
    assert int(stream.next_words(1)[0]) == expected


def test_lcg_zero_seed_remaps_to_one():
    stream = _LcgStream(GeneratorSpec(GeneratorKind.MINSTD), 0, MINSTD_MULTIPLIER, MINSTD_MODULUS)
    assert stream._state == 1


def test_constant_zero_stream():
    gen = make_generator(GeneratorSpec(GeneratorKind.CONSTANT_ZERO), 5)
    assert gen.next_words(4).tolist() == [0, 0, 0, 0]


def test_next_words_zero_is_identity():
    gen = make_generator(GeneratorSpec(GeneratorKind.XORSHIFT64STAR, seed=9), 1)
    before = gen._state
    out = gen.next_words(0)
    assert len(out) == 0
    assert gen._state == before


def test_next_words_rejects_negative():
    gen = make_generator(GeneratorSpec(GeneratorKind.CONSTANT_ZERO), 0)
    with pytest.raises(ValueError):
        gen.next_words(-1)


@pytest.mark.parametrize("kind", [GeneratorKind.MINSTD, GeneratorKind.RANDU,
                                  GeneratorKind.XORSHIFT64STAR, GeneratorKind.CONSTANT_ZERO])
def test_determinism_100k_words(kind):
    spec = GeneratorSpec(kind, seed=42)
    a = make_generator(spec, 3).next_words(100_000)
    b = make_generator(spec, 3).next_words(100_000)
    assert np.array_equal(a, b)


def test_determinism_across_chunked_reads():
    spec = GeneratorSpec(GeneratorKind.XORSHIFT64STAR, seed=777)
    whole = make_generator(spec, 2).next_words(10_000)
    gen = make_generator(spec, 2)
    parts = np.concatenate([gen.next_words(n) for n in (1, 9, 90, 900, 9000)])
    assert np.array_equal(whole, parts)


def test_xorshift_vectorized_matches_scalar_reference():
    spec = GeneratorSpec(GeneratorKind.XORSHIFT64STAR, seed=42)
    words = make_generator(spec, 3).next_words(10_000)
    state = effective_seed_for(spec, 3) or GOLDEN_GAMMA
    expected = np.empty(10_000, dtype=np.uint32)
    for i in range(10_000):
        state = xorshift64star_step(state)
        expected[i] = ((state * XORSHIFT_MULTIPLIER) & MASK64) >> 32
    assert np.array_equal(words, expected)


@pytest.mark.parametrize("kind,mult,mod", [
    (GeneratorKind.MINSTD, MINSTD_MULTIPLIER, MINSTD_MODULUS),
    (GeneratorKind.RANDU, RANDU_MULTIPLIER, RANDU_MODULUS),
])
def test_lcg_vectorized_matches_scalar_reference(kind, mult, mod):
    spec = GeneratorSpec(kind, seed=7)
    words = make_generator(spec, 1).next_words(5000)
    state = effective_seed_for(spec, 1) % mod or 1
    expected = np.empty(5000, dtype=np.uint32)
    for i in range(5000):
        a = lcg_step(state, mult, mod)
        b = lcg_step(a, mult, mod)
        expected[i] = ((a >> 15) & 0xFFFF) << 16 | ((b >> 15) & 0xFFFF)
        state = b
    assert np.array_equal(words, expected)


def test_independence_by_job_index():
    rng = np.random.default_rng(1234)
    for seed in rng.integers(1, 2**63, size=100):
        spec = GeneratorSpec(GeneratorKind.XORSHIFT64STAR, seed=int(seed))
        first0 = int(make_generator(spec, 0).next_words(1)[0])
        first1 = int(make_generator(spec, 1).next_words(1)[0])
        assert first0 != first1


def test_splitmix_mix_is_documented_formula():
    seed, idx = 977, 6
    assert mix_seed(seed, idx) == splitmix64((seed ^ (idx * GOLDEN_GAMMA)) & MASK64)
    # job index 0 still mixes: instances are decorrelated from the raw seed
    assert mix_seed(seed, 0) == splitmix64(seed)


def test_byte_stream_round_trip(tmp_path):
    words = np.arange(10, dtype="<u4")
    path = tmp_path / "stream.bin"
    path.write_bytes(words.tobytes())
    spec = GeneratorSpec(GeneratorKind.BYTE_STREAM_FILE, path=str(path))
    gen = make_generator(spec, 4)  # job index must not affect the offset
    assert np.array_equal(gen.next_words(10), words.astype(np.uint32))
    # wraps at end of file
    assert gen.next_words(3).tolist() == [0, 1, 2]


def test_byte_stream_partial_word_tail_is_dropped(tmp_path):
    path = tmp_path / "stream.bin"
    path.write_bytes(np.arange(3, dtype="<u4").tobytes() + b"\x99\x99")
    gen = make_generator(GeneratorSpec(GeneratorKind.BYTE_STREAM_FILE, path=str(path)), 0)
    assert gen.next_words(4).tolist() == [0, 1, 2, 0]


def test_byte_stream_errors(tmp_path):
    with pytest.raises(ConfigurationError):
        make_generator(GeneratorSpec(GeneratorKind.BYTE_STREAM_FILE, path=str(tmp_path / "no")), 0)
    empty = tmp_path / "empty.bin"
    empty.write_bytes(b"")
    with pytest.raises(ConfigurationError, match="empty.bin"):
        make_generator(GeneratorSpec(GeneratorKind.BYTE_STREAM_FILE, path=str(empty)), 0)
    short = tmp_path / "short.bin"
    short.write_bytes(b"ab")
    with pytest.raises(ConfigurationError):
        make_generator(GeneratorSpec(GeneratorKind.BYTE_STREAM_FILE, path=str(short)), 0)


def test_parse_generator_names():
    assert parse_generator("minstd").kind is GeneratorKind.MINSTD
    assert parse_generator("randu").kind is GeneratorKind.RANDU
    assert parse_generator("xorshift64star").kind is GeneratorKind.XORSHIFT64STAR
    assert parse_generator("zero").kind is GeneratorKind.CONSTANT_ZERO
    spec = parse_generator("file:/tmp/x.bin", seed=3)
    assert spec.kind is GeneratorKind.BYTE_STREAM_FILE and spec.path == "/tmp/x.bin"
    with pytest.raises(ConfigurationError, match="unknown generator"):
        parse_generator("mersenne")
    with pytest.raises(ConfigurationError):
        parse_generator("file:")
