"""Exception types shared across the toolkit.

Model-soundness violations (I/O, memory, clique budget) are fail-stop: an
algorithm exceeding its model is a correctness bug, not a runtime condition.
"""


class MpcdistError(Exception):
    """Base class for all package-specific errors."""


class ConnectivityFailure(MpcdistError):
    """Random generator failed to produce a connected graph within retries."""


class ParseError(MpcdistError):
    """Malformed edge-list input; carries the 1-based line number."""

    def __init__(self, line: int, msg: str):
        super().__init__(f"line {line}: {msg}")
        self.line = line


class NegativeWeight(MpcdistError):
    pass


class Disconnected(MpcdistError):
    pass


class Overflow(MpcdistError):
    """A derived quantity left the supported integer range."""


class SketchMismatch(MpcdistError):
    """Two sketches queried together come from different builds."""


class OverlapBudgetExceeded(MpcdistError):
    """A vertex was visited by too many interconnection explorations."""

    def __init__(self, vertex: int, count: int, budget: int):
        super().__init__(
            f"vertex {vertex} visited by {count} explorations (budget {budget})")
        self.vertex = vertex
        self.count = count
        self.budget = budget


class ConfigError(MpcdistError):
    pass


class IOViolation(MpcdistError):
    def __init__(self, machine: int, words: int, limit: int, direction: str):
        super().__init__(
            f"machine {machine}: {words} words {direction} exceeds S={limit}")
        self.machine = machine
        self.words = words


class MemViolation(MpcdistError):
    def __init__(self, machine: int, words: int, limit: int):
        super().__init__(
            f"machine {machine}: {words} resident words exceed S={limit}")
        self.machine = machine
        self.words = words


class CapacityExceeded(MpcdistError):
    """scatter_input was given more words than the machine pool holds."""


class EmptyRange(MpcdistError):
    pass


class PayloadTooLarge(MpcdistError):
    pass


class InsufficientExtraSpace(MpcdistError):
    """The configured extra_factor cannot host a vector primitive or mode."""


class CapExceeded(MpcdistError):
    """A vertex admitted more concurrent sources than its budget."""

    def __init__(self, vertex: int, count: int, cap: int):
        super().__init__(f"vertex {vertex} admitted {count} sources (cap {cap})")
        self.vertex = vertex
        self.count = count
        self.cap = cap


class DensityTooLow(MpcdistError):
    """Input too sparse for the sparsify-first pipeline mode."""


class SketchTooLargeForPayload(MpcdistError):
    pass


class BudgetViolation(MpcdistError):
    """Clique model: more than one message per ordered pair per round."""


class NotBuilt(MpcdistError):
    pass
