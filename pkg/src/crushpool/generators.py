"""Deterministic 32-bit word sources under test.

Built-in generators (minstd, randu, xorshift64star, zero) make the harness
self-testing; external generators are tested by dumping raw bytes to a file
and using ``file:<path>``, which is read as little-endian 32-bit words and
wraps at end of file.

Each job derives its own effective seed by mixing the base seed with the job
index through the SplitMix64 finalizer, so jobs are reproducible and
decorrelated from one another.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from enum import Enum

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15

MINSTD_MULTIPLIER = 16807
MINSTD_MODULUS = 2**31 - 1
RANDU_MULTIPLIER = 65539
RANDU_MODULUS = 2**31

XORSHIFT_SHIFTS = (12, 25, 27)
XORSHIFT_MULTIPLIER = 2685821657736338717

_LCG_BLOCK_STATES = 8192   # states per vectorized block (two states per word)
_XS_BLOCK = 4096           # xorshift states per vectorized block


class ConfigurationError(ValueError):
    """A generator spec that cannot be instantiated (bad name, bad file)."""


class GeneratorKind(Enum):
    MINSTD = "minstd"
    RANDU = "randu"
    XORSHIFT64STAR = "xorshift64star"
    CONSTANT_ZERO = "zero"
    BYTE_STREAM_FILE = "file"


@dataclass(frozen=True)
class GeneratorSpec:
    """What to test: a generator kind plus its seed (or backing file)."""

    kind: GeneratorKind
    seed: int = 1
    path: str | None = None  # BYTE_STREAM_FILE only

    def display(self) -> str:
        if self.kind is GeneratorKind.BYTE_STREAM_FILE:
            return f"file:{self.path}"
        return self.kind.value


def parse_generator(name: str, seed: int = 1) -> GeneratorSpec:
    """Build a spec from a CLI name: minstd|randu|xorshift64star|zero|file:<path>."""
    if name.startswith("file:"):
        path = name[len("file:"):]
        if not path:
            raise ConfigurationError("file: generator needs a path, e.g. file:stream.bin")
        return GeneratorSpec(GeneratorKind.BYTE_STREAM_FILE, seed=seed, path=path)
    for kind in GeneratorKind:
        if kind is not GeneratorKind.BYTE_STREAM_FILE and name == kind.value:
            return GeneratorSpec(kind, seed=seed)
    known = ", ".join(k.value for k in GeneratorKind if k is not GeneratorKind.BYTE_STREAM_FILE)
    raise ConfigurationError(f"unknown generator {name!r} (expected {known}, or file:<path>)")


def splitmix64(value: int) -> int:
    """SplitMix64 finalizer; bijective over 64-bit values."""
    z = value & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def mix_seed(seed: int, job_index: int) -> int:
    """Per-job effective seed: SplitMix64 of (seed XOR job_index * golden gamma)."""
    return splitmix64((seed ^ (job_index * GOLDEN_GAMMA)) & MASK64)


def effective_seed_for(spec: GeneratorSpec, job_index: int) -> int:
    """The seed an instance built for job_index will actually run with."""
    if spec.kind is GeneratorKind.BYTE_STREAM_FILE:
        return spec.seed  # file streams ignore seeding entirely
    return mix_seed(spec.seed, job_index)


def lcg_step(state: int, multiplier: int, modulus: int) -> int:
    """One raw multiplicative-LCG step."""
    return (state * multiplier) % modulus


def xorshift64star_step(state: int) -> int:
    """One raw xorshift64* state transition (output multiply not included)."""
    state ^= state >> XORSHIFT_SHIFTS[0]
    state ^= (state << XORSHIFT_SHIFTS[1]) & MASK64
    state ^= state >> XORSHIFT_SHIFTS[2]
    return state


class GeneratorInstance:
    """A single-owner stream of 32-bit words; never shared between jobs."""

    def __init__(self, spec: GeneratorSpec, effective_seed: int):
        self.spec = spec
        self.effective_seed = effective_seed

    def next_words(self, n: int) -> np.ndarray:
        """Advance the stream by exactly n words; returns a uint32 array."""
        if n < 0:
            raise ValueError("word count must be non-negative")
        if n == 0:
            return np.empty(0, dtype=np.uint32)
        return self._generate(n)

    def _generate(self, n: int) -> np.ndarray:
        raise NotImplementedError


class _ZeroStream(GeneratorInstance):
    def _generate(self, n):
        return np.zeros(n, dtype=np.uint32)


_LCG_POWER_CACHE: dict[tuple[int, int], np.ndarray] = {}


def _lcg_powers(multiplier: int, modulus: int) -> np.ndarray:
    """multiplier^1..multiplier^BLOCK mod modulus, as uint64."""
    key = (multiplier, modulus)
    cached = _LCG_POWER_CACHE.get(key)
    if cached is None:
        powers = np.empty(_LCG_BLOCK_STATES, dtype=np.uint64)
        value = 1
        for j in range(_LCG_BLOCK_STATES):
            value = (value * multiplier) % modulus
            powers[j] = value
        _LCG_POWER_CACHE[key] = cached = powers
    return cached


class _LcgStream(GeneratorInstance):
    """31-bit multiplicative LCG; one word packs the top 16 bits of two states.

    Generation is vectorized by jump-ahead: a block of successor states is
    multiplier^j * state mod modulus over a precomputed power table. Products
    stay below 2^62 so uint64 arithmetic is exact.
    """

    def __init__(self, spec, effective_seed, multiplier, modulus):
        super().__init__(spec, effective_seed)
        self.multiplier = multiplier
        self.modulus = modulus
        state = effective_seed % modulus
        if state == 0:
            state = 1  # zero is absorbing for a multiplicative LCG
        self._state = state

    def _next_states(self, count: int) -> np.ndarray:
        powers = _lcg_powers(self.multiplier, self.modulus)
        out = np.empty(count, dtype=np.uint64)
        filled = 0
        while filled < count:
            take = min(_LCG_BLOCK_STATES, count - filled)
            block = powers[:take] * np.uint64(self._state)
            if self.modulus == RANDU_MODULUS:
                block &= np.uint64(RANDU_MODULUS - 1)
            else:
                block %= np.uint64(self.modulus)
            out[filled:filled + take] = block
            self._state = int(block[-1])
            filled += take
        return out

    def _generate(self, n):
        states = self._next_states(2 * n)
        top16 = (states >> np.uint64(15)) & np.uint64(0xFFFF)
        words = (top16[0::2] << np.uint64(16)) | top16[1::2]
        return words.astype(np.uint32)


_XS_BASIS: np.ndarray | None = None


def _xs_basis_matrix() -> np.ndarray:
    """M[j, b] = T^(j+1) e_b for the xorshift transition T, j < block size.

    T is linear over GF(2), so a block of successors of any state s is the
    XOR of the columns selected by the set bits of s.
    """
    global _XS_BASIS
    if _XS_BASIS is None:
        s0, s1, s2 = (np.uint64(s) for s in XORSHIFT_SHIFTS)
        v = np.array([1 << b for b in range(64)], dtype=np.uint64)
        matrix = np.empty((_XS_BLOCK, 64), dtype=np.uint64)
        for j in range(_XS_BLOCK):
            v = v ^ (v >> s0)
            v = v ^ (v << s1)
            v = v ^ (v >> s2)
            matrix[j] = v
        _XS_BASIS = matrix
    return _XS_BASIS


class _XorshiftStream(GeneratorInstance):
    """xorshift64*: state evolves by xorshifts, output is the product's top half."""

    def __init__(self, spec, effective_seed):
        super().__init__(spec, effective_seed)
        # the all-zero state is a fixed point; the mix virtually never emits it
        self._state = effective_seed or GOLDEN_GAMMA

    def _generate(self, n):
        matrix = _xs_basis_matrix()
        states = np.empty(n, dtype=np.uint64)
        filled = 0
        while filled < n:
            take = min(_XS_BLOCK, n - filled)
            bits = [b for b in range(64) if (self._state >> b) & 1]
            block = np.bitwise_xor.reduce(matrix[:take, bits], axis=1)
            states[filled:filled + take] = block
            self._state = int(block[-1])
            filled += take
        products = states * np.uint64(XORSHIFT_MULTIPLIER)  # wraps mod 2^64
        return (products >> np.uint64(32)).astype(np.uint32)


class _ByteStream(GeneratorInstance):
    """Words from a raw byte file, little-endian, wrapping at end of file."""

    def __init__(self, spec, effective_seed):
        super().__init__(spec, effective_seed)
        path = spec.path or ""
        if not os.path.isfile(path):
            raise ConfigurationError(f"byte-stream file not found: {path}")
        with open(path, "rb") as handle:
            data = handle.read()
        word_count = len(data) // 4
        if word_count == 0:
            raise ConfigurationError(f"byte-stream file too small (needs >= 4 bytes): {path}")
        self._words = np.frombuffer(data[: word_count * 4], dtype="<u4")
        self._offset = 0

    def _generate(self, n):
        idx = (self._offset + np.arange(n, dtype=np.int64)) % len(self._words)
        self._offset = int((self._offset + n) % len(self._words))
        return self._words[idx].astype(np.uint32)


def make_generator(spec: GeneratorSpec, job_index: int = 0) -> GeneratorInstance:
    """Fresh instance for one job; the word stream is a pure function of (spec, job_index)."""
    if job_index < 0:
        raise ValueError("job_index must be non-negative")
    seed = effective_seed_for(spec, job_index)
    if spec.kind is GeneratorKind.CONSTANT_ZERO:
        return _ZeroStream(spec, seed)
    if spec.kind is GeneratorKind.MINSTD:
        return _LcgStream(spec, seed, MINSTD_MULTIPLIER, MINSTD_MODULUS)
    if spec.kind is GeneratorKind.RANDU:
        return _LcgStream(spec, seed, RANDU_MULTIPLIER, RANDU_MODULUS)
    if spec.kind is GeneratorKind.XORSHIFT64STAR:
        return _XorshiftStream(spec, seed)
    if spec.kind is GeneratorKind.BYTE_STREAM_FILE:
        return _ByteStream(spec, seed)
    raise ConfigurationError(f"unsupported generator kind: {spec.kind}")
