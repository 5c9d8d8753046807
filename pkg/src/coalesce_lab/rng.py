"""Counter-based, splittable random words.

Every draw is a pure function of ``(seed, replica, stream, counter)``: the
first three are folded into a 64-bit key, and the counter is a pair
``(hi, lo)`` packed into one 64-bit integer.  A key plus a Weyl step over the
counter is hashed with the SplitMix64 finalizer (two rounds, the second one
keyed).  Nothing is sequential, so any schedule of replicas, steps and
particles reproduces the same numbers.

The scalar functions are compiled with numba and called from the simulation
kernels; the ``*_np`` twins run the very same arithmetic on ``uint64`` arrays.
"""

from __future__ import annotations

import math

import numpy as np

from ._accel import njit

MASK64 = (1 << 64) - 1

GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB

_GOLDEN_U = np.uint64(GOLDEN)
_M1_U = np.uint64(_M1)
_M2_U = np.uint64(_M2)
_S11 = np.uint64(11)
_S27 = np.uint64(27)
_S30 = np.uint64(30)
_S31 = np.uint64(31)
_S32 = np.uint64(32)
_ONE = np.uint64(1)
_TWO_M53 = 1.0 / 9007199254740992.0
_TWO_PI = 2.0 * math.pi

STREAM_WALK = 1
STREAM_INCREMENT = 2
STREAM_BRIDGE = 3


def _mix64(z):
    z = (z ^ (z >> _S30)) * _M1_U
    z = (z ^ (z >> _S27)) * _M2_U
    return z ^ (z >> _S31)


def _counter_word(key, hi, lo):
    c = (hi << _S32) | lo
    return _mix64(_mix64(key + c * _GOLDEN_U) ^ key)


mix64 = njit(_mix64)


@njit
def counter_word(key, hi, lo):
    """Random 64-bit word for counter ``(hi, lo)`` under ``key``."""
    return mix64(mix64(key + ((np.uint64(hi) << _S32) | np.uint64(lo)) * _GOLDEN_U) ^ key)


@njit
def word_to_uniform(w):
    """Uniform on [0, 1) from the top 53 bits."""
    return np.float64(w >> _S11) * _TWO_M53


@njit
def word_to_normal(w):
    """Standard normal by Box-Muller; the angle uses a re-mixed word."""
    u1 = (np.float64(w >> _S11) + 1.0) * _TWO_M53
    u2 = np.float64(mix64(w + _GOLDEN_U) >> _S11) * _TWO_M53
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(_TWO_PI * u2)


@njit
def popcount64(x):
    x = x - ((x >> _ONE) & np.uint64(0x5555555555555555))
    x = (x & np.uint64(0x3333333333333333)) + ((x >> np.uint64(2)) & np.uint64(0x3333333333333333))
    x = (x + (x >> np.uint64(4))) & np.uint64(0x0F0F0F0F0F0F0F0F)
    return np.int64((x * np.uint64(0x0101010101010101)) >> np.uint64(56))


# numpy twins (arrays only: numpy scalars warn on wrap-around)

def mix64_np(z: np.ndarray) -> np.ndarray:
    return _mix64(np.asarray(z, dtype=np.uint64))


def counter_word_np(key, hi, lo) -> np.ndarray:
    hi = np.atleast_1d(np.asarray(hi)).astype(np.uint64)
    lo = np.atleast_1d(np.asarray(lo)).astype(np.uint64)
    key = np.atleast_1d(np.asarray(key, dtype=np.uint64))
    return _counter_word(key, hi, lo)


def word_to_uniform_np(w: np.ndarray) -> np.ndarray:
    return (w >> _S11).astype(np.float64) * _TWO_M53


def word_to_normal_np(w: np.ndarray) -> np.ndarray:
    u1 = ((w >> _S11).astype(np.float64) + 1.0) * _TWO_M53
    u2 = (_mix64(w + _GOLDEN_U) >> _S11).astype(np.float64) * _TWO_M53
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(_TWO_PI * u2)


# key derivation (plain Python integers)

def _mix64_int(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def stream_key(seed: int, replica: int, stream: int) -> int:
    """Fold ``(seed, replica, stream)`` into one 64-bit key."""
    if not 0 <= seed <= MASK64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    if replica < 0:
        raise ValueError("replica index must be non-negative")
    k = _mix64_int(seed + GOLDEN)
    k = _mix64_int(k ^ ((replica + 1) * _M1))
    return _mix64_int(k + stream * _M2)


def stream_keys(seed: int, replicas: np.ndarray, stream: int) -> np.ndarray:
    return np.array([stream_key(seed, int(r), stream) for r in replicas], dtype=np.uint64)


class CounterRNG:
    """Splittable view of the counter-based generator.

    ``CounterRNG(seed).split(replica)`` gives the generator of one replica;
    ``key(stream)`` is what the kernels consume.  The array methods are
    convenient for tests and for code outside the hot loops.
    """

    def __init__(self, seed: int = 0, replica: int = 0):
        stream_key(seed, replica, 0)  # validates
        self.seed = int(seed)
        self.replica = int(replica)

    def split(self, replica: int) -> "CounterRNG":
        return CounterRNG(self.seed, replica)

    def key(self, stream: int) -> int:
        return stream_key(self.seed, self.replica, stream)

    def words(self, stream: int, hi, lo) -> np.ndarray:
        return counter_word_np(np.uint64(self.key(stream)), hi, lo)

    def uniform(self, stream: int, hi, lo) -> np.ndarray:
        return word_to_uniform_np(self.words(stream, hi, lo))

    def normal(self, stream: int, hi, lo) -> np.ndarray:
        return word_to_normal_np(self.words(stream, hi, lo))

    def __repr__(self) -> str:
        return f"CounterRNG(seed={self.seed}, replica={self.replica})"
