"""Counter-based deterministic random streams (splitmix64).

Every random quantity in the simulator is derived from a seed through these
helpers, so any frame, trial or noise field can be regenerated in isolation
and results never depend on worker count or scheduling.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_CHAIN_INIT = 0x6A09E667F3BCC909

# numpy copies of the constants; uint64 arithmetic wraps silently, which is
# exactly the modular behaviour splitmix64 wants.
_U_GOLDEN = np.uint64(_GOLDEN)
_U_MIX1 = np.uint64(_MIX1)
_U_MIX2 = np.uint64(_MIX2)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)

_INV_2_53 = float(2.0 ** -53)


def mix64(x: int) -> int:
    """splitmix64 finalizer on a python int (mod 2**64)."""
    z = x & _MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return z ^ (z >> 31)


def derive_seed(*parts) -> int:
    """Fold ints and strings into a 64-bit seed, order-sensitive.

    Used for the documented seed tree: e.g. derive_seed(master, "slip", i, t, s).
    """
    h = _CHAIN_INIT
    for p in parts:
        if isinstance(p, str):
            for b in p.encode("utf-8"):
                h = mix64((h + _GOLDEN) ^ (b + 0x100))
        elif isinstance(p, (int, np.integer)):
            h = mix64((h + _GOLDEN) ^ (int(p) & _MASK64))
        else:
            raise TypeError(f"seed parts must be int or str, got {type(p)!r}")
    return h


def _counter_hash(seed: int, idx: np.ndarray) -> np.ndarray:
    """Vectorized splitmix64 stream: finalize(seed + k*golden)."""
    z = np.uint64(seed & _MASK64) + idx * _U_GOLDEN
    z = (z ^ (z >> _S30)) * _U_MIX1
    z = (z ^ (z >> _S27)) * _U_MIX2
    return z ^ (z >> _S31)


def uniform_field(seed: int, n: int) -> np.ndarray:
    """n doubles in [0, 1), addressable by index."""
    idx = np.arange(n, dtype=np.uint64)
    return (_counter_hash(seed, idx) >> _S11).astype(np.float64) * _INV_2_53


def gaussian_field(seed: int, n: int) -> np.ndarray:
    """n standard-normal doubles via Box-Muller on two counter streams.

    Value i depends only on (seed, i), so noise images are reproducible
    per pixel regardless of how work is scheduled.
    """
    idx = np.arange(n, dtype=np.uint64)
    two = np.uint64(2)
    one = np.uint64(1)
    h1 = _counter_hash(seed, idx * two)
    h2 = _counter_hash(seed, idx * two + one)
    # u1 in (0, 1] keeps the log finite
    u1 = ((h1 >> _S11) + one).astype(np.float64) * _INV_2_53
    u2 = (h2 >> _S11).astype(np.float64) * _INV_2_53
    return np.sqrt(-2.0 * np.log(u1)) * np.cos((2.0 * np.pi) * u2)


def uniform(seed: int, index: int, lo: float, hi: float) -> float:
    """One double in [lo, hi) from position `index` of the stream."""
    h = mix64((seed + (index + 1) * _GOLDEN) & _MASK64)
    u = (h >> 11) * _INV_2_53
    return lo + (hi - lo) * u


def shuffled(items, seed: int) -> list:
    """Deterministic Fisher-Yates shuffle driven by the splitmix stream."""
    out = list(items)
    n = len(out)
    k = 0
    for i in range(n - 1, 0, -1):
        # rejection-free modulo is fine here; bias is ~2**-64 per draw
        h = mix64((seed + (k + 1) * _GOLDEN) & _MASK64)
        j = h % (i + 1)
        k += 1
        out[i], out[j] = out[j], out[i]
    return out
