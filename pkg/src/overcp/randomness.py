"""Deterministic randomness: named substreams of a counter-based generator.

Every consumer of randomness in this package names its stream by a
``(seed, *path)`` tuple, e.g. ``substream(seed, "reinit", epoch)``.  Streams
with different paths are statistically independent (Philox keyed through
``SeedSequence`` spawn keys), so adding or removing a draw in one place can
never perturb the draws seen elsewhere — trajectories stay reproducible even
if diagnostics are evaluated in parallel or skipped.
"""
import zlib

import numpy as np

_MASK64 = (1 << 64) - 1
_MASK32 = (1 << 32) - 1

MIN_SPHERE_NORM = 1e-12


def _path_word(x):
    if isinstance(x, str):
        return zlib.crc32(x.encode("utf-8"))
    return int(x) & _MASK32


def substream(seed, *path):
    """Independent ``numpy.random.Generator`` for the given (seed, path).

    Parameters
    ----------
    seed : int
        Base seed (interpreted as an unsigned 64-bit value).
    *path : str or int
        Stream name, e.g. ``("init", component)`` or ``("reinit", epoch)``.
    """
    key = tuple(_path_word(p) for p in path)
    ss = np.random.SeedSequence(entropy=int(seed) & _MASK64, spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))


def unit_sphere(rng, d):
    """Uniform point on the unit sphere in R^d.

    Normalizes a standard-normal vector, redrawing in the (measure-zero)
    event that its norm falls below ``MIN_SPHERE_NORM``.
    """
    while True:
        g = rng.standard_normal(d)
        n = float(np.linalg.norm(g))
        if n >= MIN_SPHERE_NORM:
            return g / n


def rademacher(rng):
    """A single ±1 sign with equal probability."""
    return 1.0 if rng.random() < 0.5 else -1.0
