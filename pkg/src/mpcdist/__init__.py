"""mpcdist: distance sketches, hopsets, and spanners with an MPC simulator.

The package builds compact distance oracles over weighted undirected graphs
three ways — as plain sequential algorithms, inside a message-budgeted MPC
simulation, and inside a congested-clique simulation — and checks that all
three produce byte-identical structures.
"""

from .errors import (
    BudgetViolation,
    CapExceeded,
    CapacityExceeded,
    ConfigError,
    ConnectivityFailure,
    DensityTooLow,
    Disconnected,
    EmptyRange,
    IOViolation,
    InsufficientExtraSpace,
    MemViolation,
    MpcdistError,
    NegativeWeight,
    NotBuilt,
    Overflow,
    OverlapBudgetExceeded,
    ParseError,
    PayloadTooLarge,
    SketchMismatch,
    SketchTooLargeForPayload,
)
from .graphs import Graph, UNREACHABLE
from .kernels import BACKEND_NAME, HAVE_COMPILED, INF

__version__ = "0.1.0"

__all__ = [
    "BACKEND_NAME",
    "BudgetViolation",
    "CapExceeded",
    "CapacityExceeded",
    "ConfigError",
    "ConnectivityFailure",
    "DensityTooLow",
    "Disconnected",
    "EmptyRange",
    "Graph",
    "HAVE_COMPILED",
    "INF",
    "IOViolation",
    "InsufficientExtraSpace",
    "MemViolation",
    "MpcdistError",
    "NegativeWeight",
    "NotBuilt",
    "Overflow",
    "OverlapBudgetExceeded",
    "ParseError",
    "PayloadTooLarge",
    "SketchMismatch",
    "SketchTooLargeForPayload",
    "UNREACHABLE",
    "__version__",
]
