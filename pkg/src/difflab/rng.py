"""Counter-based random numbers keyed by point coordinates.

Every draw is a pure function of ``(seed, key, counter)``: there is no
generator state to advance, so the value attached to a point never depends
on which other points were enumerated or in what order.  The mixing
function is the SplitMix64 finalizer applied in a two-round keyed fashion.
"""

import numpy as np

_M64 = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_C1 = np.uint64(0xBF58476D1CE4E5B9)
_C2 = np.uint64(0x94D049BB133111EB)
_TWO_M53 = 2.0 ** -53


def _mix(z):
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = z + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _C1
        z = (z ^ (z >> np.uint64(27))) * _C2
    return z ^ (z >> np.uint64(31))


def seed_word(seed):
    """Reduce an arbitrary Python int to a mixed 64-bit word."""
    return _mix(np.array([int(seed) & _M64], dtype=np.uint64))[0]


def salted(seed, salt):
    """Derive an independent seed word for a named substream."""
    h = 0
    for ch in str(salt).encode():
        h = (h * 1099511628211 + ch) & _M64
    return _mix(np.array([seed_word(seed) ^ np.uint64(h)], dtype=np.uint64))[0]


def point_keys(points):
    """Hash rows of a float array to 64-bit keys.

    The key depends on the exact IEEE-754 bit pattern of each coordinate,
    which is in one-to-one correspondence with its shortest round-trip
    decimal (17 significant digits).  ``-0.0`` is folded onto ``0.0``.
    """
    pts = np.ascontiguousarray(np.asarray(points, dtype=np.float64))
    if pts.ndim == 1:
        pts = pts[:, None]
    pts = pts + 0.0  # -0.0 -> 0.0
    bits = pts.view(np.uint64)
    h = np.full(pts.shape[0], np.uint64(pts.shape[1]), dtype=np.uint64)
    for j in range(pts.shape[1]):
        h = _mix(h ^ bits[:, j])
    return h


def integer_keys(labels):
    """Hash rows of an integer array (lattice labels) to 64-bit keys."""
    lab = np.asarray(labels, dtype=np.int64)
    if lab.ndim == 1:
        lab = lab[:, None]
    h = np.full(lab.shape[0], np.uint64(0x1234567 + lab.shape[1]), dtype=np.uint64)
    u = lab.view(np.uint64)
    for j in range(lab.shape[1]):
        h = _mix(h ^ _mix(u[:, j]))
    return h


def uniforms(seed, keys, n):
    """Return an ``(len(keys), n)`` array of uniforms in the open interval (0, 1)."""
    keys = np.asarray(keys, dtype=np.uint64)
    sw = seed_word(seed) if not isinstance(seed, np.uint64) else seed
    base = _mix(keys ^ sw)
    out = np.empty((keys.shape[0], n), dtype=np.float64)
    for j in range(n):
        with np.errstate(over="ignore"):
            x = _mix(base + np.uint64(j + 1) * _C2)
        out[:, j] = ((x >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO_M53
    return out


def normals(seed, keys, n):
    """Standard normals, ``(len(keys), n)``, via Box-Muller on 2n uniforms."""
    u = uniforms(seed, keys, 2 * n)
    r = np.sqrt(-2.0 * np.log(u[:, :n]))
    return r * np.cos(2.0 * np.pi * u[:, n:])
