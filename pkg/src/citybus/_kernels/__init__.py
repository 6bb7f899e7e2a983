"""Hot-path primitives with a compiled core and a pure-Python fallback.

The compiled extension is preferred when present; set ``CITYBUS_KERNELS=python``
to force the fallback (used by the backend-equivalence tests and the
benchmark in ``benchmarks/bench_kernels.py``).
"""

import os

from citybus._kernels import _pykernels

if os.environ.get("CITYBUS_KERNELS", "").lower() == "python":
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from citybus._kernels import _ckernels as _impl

        BACKEND = "c"
    except ImportError:
        _impl = _pykernels
        BACKEND = "python"

FNV_OFFSET = _impl.FNV_OFFSET
FNV_PRIME = _impl.FNV_PRIME
fnv1a64 = _impl.fnv1a64
splitmix64_next = _impl.splitmix64_next
splitmix64_bounded = _impl.splitmix64_bounded
splitmix64_fill_bounded = _impl.splitmix64_fill_bounded
splitmix64_bytes = _impl.splitmix64_bytes

__all__ = [
    "BACKEND",
    "FNV_OFFSET",
    "FNV_PRIME",
    "fnv1a64",
    "splitmix64_next",
    "splitmix64_bounded",
    "splitmix64_fill_bounded",
    "splitmix64_bytes",
]
