"""Counter-based random streams.

Every draw is a pure function of ``(master_seed, purpose, node, iteration,
round, index)``. There is no hidden generator state, so a simulation gives
the same numbers no matter in which order nodes, rounds or whole runs are
evaluated, and two draws with different keys are independent.

The mixing function is the SplitMix64 finalizer applied in a sponge-like
chain over the key fields, vectorized over numpy ``uint64`` arrays.
"""

import zlib

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30, _S27, _S31, _S11 = (np.uint64(s) for s in (30, 27, 31, 11))
_TWO_M53 = 2.0 ** -53

_PURPOSES = {"comm": 1, "grad": 2, "init": 3, "data": 4, "graph": 5}


def purpose_code(purpose):
    """Map a purpose label to a stable integer code."""
    if isinstance(purpose, (int, np.integer)):
        return int(purpose)
    if purpose in _PURPOSES:
        return _PURPOSES[purpose]
    # crc32 is stable across interpreter runs, unlike hash()
    return 1000 + zlib.crc32(purpose.encode("utf-8"))


def _mix(z, inplace=False):
    z = z if inplace else z.copy()
    z ^= z >> _S30
    z *= _M1
    z ^= z >> _S27
    z *= _M2
    z ^= z >> _S31
    return z


def _absorb(h, field):
    return _mix(h + _GOLDEN + np.asarray(field, dtype=np.uint64) * _M2)


_MASK = (1 << 64) - 1


def _mix_int(z):
    # scalar twin of _mix on Python ints, cheaper than 0-d arrays
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def _absorb_int(h, field):
    return _mix_int((h + 0x9E3779B97F4A7C15 + (int(field) & _MASK) * 0x94D049BB133111EB) & _MASK)


_COUNTERS = {}


def _counter(size):
    # (i + 1) * golden for i < size, the SplitMix64 increment sequence
    c = _COUNTERS.get(size)
    if c is None:
        with np.errstate(over="ignore"):
            c = (np.arange(1, size + 1, dtype=np.uint64) * _GOLDEN)[None, :]
        c.setflags(write=False)
        if size <= 4096:
            _COUNTERS[size] = c
    return c


def _to_unit(b):
    b >>= _S11
    u = b.astype(np.float64)
    u *= _TWO_M53
    return u


class RngStream:
    """Keyed source of uniform, normal and integer draws.

    Parameters
    ----------
    seed : int
        Master seed. Any non-negative integer below 2**64.

    Notes
    -----
    Draw methods take ``nodes`` (an int or an integer array) and return one
    block of values per node, shaped ``(len(nodes),) + shape``.
    """

    def __init__(self, seed):
        seed = int(seed)
        if seed < 0 or seed >= 2 ** 64:
            raise ValueError(f"seed must be in [0, 2**64), got {seed}")
        self.seed = seed
        with np.errstate(over="ignore"):
            self._root = _mix(np.array([seed], dtype=np.uint64) + _GOLDEN)
        self._root_int = int(self._root[0])

    def __repr__(self):
        return f"RngStream(seed={self.seed})"

    def spawn(self, salt):
        """Derived stream, e.g. for the n-th redraw of a random graph."""
        with np.errstate(over="ignore"):
            h = _absorb(self._root, purpose_code("spawn"))
            h = _absorb(h, int(salt))
        return RngStream(int(h[0]))

    def _lanes(self, purpose, nodes, iteration, rnd, size, lanes):
        # (len(lanes), len(nodes), size) raw words; the scalar key fields are
        # chained on Python ints and only the node and counter steps touch
        # arrays, so uint64 wrap-around never goes through numpy scalars
        nodes = np.asarray(nodes, dtype=np.uint64).reshape(-1)
        h = self._root_int
        for field in (purpose_code(purpose), iteration, rnd):
            h = _absorb_int(h, field)
        heads = np.array([(_absorb_int(h, lane) + 0x9E3779B97F4A7C15) & _MASK for lane in lanes],
                         dtype=np.uint64)
        hn = nodes * _M2
        hn = hn[None, :] + heads[:, None]
        _mix(hn, inplace=True)
        out = hn[:, :, None] + _counter(size)[None]
        return _mix(out, inplace=True)

    def bits(self, purpose, nodes, iteration=0, rnd=0, shape=(), lane=0):
        shape = (shape,) if isinstance(shape, (int, np.integer)) else tuple(shape)
        size = int(np.prod(shape, dtype=np.int64)) if shape else 1
        out = self._lanes(purpose, nodes, iteration, rnd, size, (lane,))[0]
        return out.reshape((out.shape[0],) + shape)

    def uniform(self, purpose, nodes, iteration=0, rnd=0, shape=(), lane=0):
        """Uniform draws on [0, 1) with 53 random bits each."""
        return _to_unit(self.bits(purpose, nodes, iteration, rnd, shape, lane))

    def normal(self, purpose, nodes, iteration=0, rnd=0, shape=()):
        """Standard normal draws (Box-Muller over two independent lanes)."""
        shape = (shape,) if isinstance(shape, (int, np.integer)) else tuple(shape)
        size = int(np.prod(shape, dtype=np.int64)) if shape else 1
        u = _to_unit(self._lanes(purpose, nodes, iteration, rnd, size, (0, 1)))
        np.negative(u[0], out=u[0])
        np.log1p(u[0], out=u[0])
        u[0] *= -2.0
        np.sqrt(u[0], out=u[0])
        u[1] *= 2.0 * np.pi
        np.cos(u[1], out=u[1])
        u[0] *= u[1]
        return u[0].reshape((u.shape[1],) + shape)

    def integers(self, purpose, nodes, high, iteration=0, rnd=0, shape=()):
        """Integers in ``[0, high)``; ``high`` may be per node."""
        u = self.uniform(purpose, nodes, iteration, rnd, shape)
        high = np.asarray(high)
        if high.ndim:
            high = high.reshape((-1,) + (1,) * (u.ndim - 1))
        return np.minimum((u * high).astype(np.int64), high - 1)

    def generator(self, purpose, key=0):
        """A numpy Generator seeded from this stream, for bulk set-up work
        (data synthesis, random spectra) where keyed access is not needed."""
        b = self.bits(purpose, [key], shape=4)
        return np.random.Generator(np.random.Philox(key=b[0, :2]))
