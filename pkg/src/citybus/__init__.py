"""citybus: a desk-scale smart-city data management platform.

Structured inference results travel edge -> fog -> cloud over per-layer
pub/sub brokers, land on a partitioned/replicated fusion bus, and are
archived in a queryable store; raw AV byte streams are segmented into a
time-indexed archive; a partition-count optimizer keeps the bus inside
latency and sizing guidelines.
"""

from citybus._kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "__version__"]
