"""Pure-Python kernels: SplitMix64 steps and FNV-1a 64-bit hashing.

Bit-identical to the compiled backend in ``_ckernels``; all arithmetic is
carried out modulo 2**64. Callers must pass states already reduced to the
64-bit range.
"""

_MASK64 = 0xFFFFFFFFFFFFFFFF
_GOLDEN = 0x9E3779B97F4A7C15

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3


def fnv1a64(data):
    h = FNV_OFFSET
    for b in data:
        h = ((h ^ b) * FNV_PRIME) & _MASK64
    return h


def splitmix64_next(state):
    state = (state + _GOLDEN) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def splitmix64_bounded(state, bound):
    """Advance past rejected draws and return an unbiased value in [0, bound)."""
    if bound < 1:
        raise ValueError("bound must be >= 1")
    # Reject the partial interval at the bottom: accepting only draws
    # >= 2**64 % bound leaves a set whose size is an exact multiple of bound.
    threshold = ((1 << 64) - bound) % bound
    while True:
        state, value = splitmix64_next(state)
        if value >= threshold:
            return state, value % bound


def splitmix64_fill_bounded(state, bound, count):
    if bound < 1:
        raise ValueError("bound must be >= 1")
    threshold = ((1 << 64) - bound) % bound
    out = []
    for _ in range(count):
        while True:
            state, value = splitmix64_next(state)
            if value >= threshold:
                out.append(value % bound)
                break
    return state, out


def splitmix64_bytes(state, count):
    """Return `count` deterministic bytes (little-endian packed u64 draws)."""
    chunks = []
    for _ in range((count + 7) // 8):
        state, value = splitmix64_next(state)
        chunks.append(value.to_bytes(8, "little"))
    return state, b"".join(chunks)[:count]
