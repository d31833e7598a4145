class FabricError(Exception):
    """Base class for every error raised by the fabric toolchain."""


class ConfigError(FabricError):
    pass


class ParseError(FabricError):
    def __init__(self, message: str, position: int):
        self.position = position
        self.reason = message
        super().__init__(f"{message} at position {position}")


class ValueRangeError(ParseError):
    pass


class EvaluationError(FabricError):
    pass


class StepBudgetExceeded(EvaluationError):
    def __init__(self, steps: int):
        self.steps = steps
        super().__init__(f"step budget exhausted after {steps} steps (likely divergence)")


class InvalidDeltaOperand(EvaluationError):
    pass


class ChurchEncodingError(FabricError):
    pass


class ClusterLimitExceeded(FabricError):
    def __init__(self, required: int, limit: int):
        self.required = required
        self.limit = limit
        super().__init__(f"cluster node limit exceeded: need {required}, limit {limit}")


class GraphIntegrityError(FabricError):
    pass


class BenchFormatError(FabricError):
    def __init__(self, line_no: int, message: str):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


class AluQueueOverflow(FabricError):
    def __init__(self, uni: int, capacity: int):
        self.uni = uni
        self.capacity = capacity
        super().__init__(f"ALU request stack full ({capacity}) when node {uni} requested")
