"""Counter-based keyed hashing.

Every random quantity in the package (environment sites, walk steps, seed
splitting) is a pure function of a 64-bit key and integer counters, mixed
with the splitmix64 finalizer. Nothing carries hidden generator state, so any
site or step can be recomputed in isolation.
"""

import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0

# stream tags; fixed forever, changing them changes every realization
STREAM_SITE = 1
STREAM_STEP = 2
STREAM_COIN = 3
STREAM_ENV_SPLIT = 4
STREAM_WALK_SPLIT = 5
STREAM_MARKOV0 = 6
STREAM_MARKOV_POS = 7
STREAM_MARKOV_NEG = 8
STREAM_BERNOULLI = 9
STREAM_RSTEP = 10
STREAM_RESID = 11
STREAM_AUX = 12

_MASK64 = (1 << 64) - 1


@njit(cache=True)
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True)
def key(seed, stream):
    return mix64(np.uint64(seed) ^ (np.uint64(stream) * _GOLDEN))


@njit(cache=True)
def absorb(h, counter):
    # counters are signed; the cast keeps two's complement bits
    return mix64(h + np.uint64(np.int64(counter)) + _GOLDEN)


@njit(cache=True)
def to_unit(h):
    return np.float64(h >> _S11) * _INV53


@njit(cache=True)
def uniform1(seed, stream, c0):
    return to_unit(absorb(key(seed, stream), c0))


@njit(cache=True)
def uniform2(seed, stream, c0, c1):
    return to_unit(absorb(absorb(key(seed, stream), c0), c1))


@njit(cache=True)
def site_uniform(seed, coords):
    """Uniform in [0, 1) attached to a lattice site; 1D sites use a length-1 array."""
    h = key(seed, STREAM_SITE)
    for i in range(coords.shape[0]):
        h = absorb(h, coords[i])
    return to_unit(h)


@njit(cache=True)
def site_uniform1(seed, x):
    # same value as site_uniform(seed, np.array([x]))
    return to_unit(absorb(key(seed, STREAM_SITE), x))


@njit(cache=True)
def _split(seed, stream, index):
    return np.int64(absorb(key(seed, stream), index))


def as_seed(seed: int) -> int:
    """Map any Python integer onto the signed 64-bit range used by the kernels."""
    s = int(seed) & _MASK64
    return s - (1 << 64) if s >= (1 << 63) else s


def derive_seed(master: int, stream: int, index: int) -> int:
    """Child seed number ``index`` of ``master`` on ``stream``."""
    return int(_split(as_seed(master), stream, int(index)))


def walker_seeds(master: int, index: int) -> tuple[int, int]:
    """(env_seed, walk_seed) of walker ``index`` under ``master``."""
    return (derive_seed(master, STREAM_ENV_SPLIT, index),
            derive_seed(master, STREAM_WALK_SPLIT, index))


def unit_from_key(seed: int, *counters: int) -> float:
    """Deterministic uniform for Python-level callers (e.g. bootstrap seeding)."""
    h = as_seed(seed)
    for c in counters:
        h = int(_split(h, STREAM_AUX, int(c)))
    return (h & _MASK64) / float(1 << 64)
