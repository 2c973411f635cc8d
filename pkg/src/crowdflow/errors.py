"""Exception hierarchy shared by every module.

Each class corresponds to one failure kind; messages name the offending key,
index or line so callers can report them without extra context.
"""


class CrowdFlowError(ValueError):
    kind = "error"


class MissingKey(CrowdFlowError):
    kind = "missing-key"


class ShapeMismatch(CrowdFlowError):
    kind = "shape-mismatch"


class InvalidCoordinate(CrowdFlowError):
    kind = "invalid-coordinate"


class NonFiniteValue(CrowdFlowError):
    kind = "non-finite-value"


class InvalidValue(CrowdFlowError):
    kind = "invalid-value"


class IOFailure(CrowdFlowError):
    kind = "io-failure"


class UnknownStation(CrowdFlowError):
    kind = "unknown-station-id"


class MalformedRow(CrowdFlowError):
    kind = "malformed-row"


class EmptyInput(CrowdFlowError):
    kind = "empty-input"


class RatioSumNotOne(CrowdFlowError):
    kind = "ratio-sum-not-one"


class EmptySplit(CrowdFlowError):
    kind = "empty-split"


class InsufficientHistory(CrowdFlowError):
    kind = "insufficient-history"


class InsufficientLength(CrowdFlowError):
    kind = "insufficient-length"


class InvalidConfig(CrowdFlowError):
    kind = "invalid-config"


class SingularSystem(CrowdFlowError):
    kind = "singular-system"


class NonFiniteLoss(CrowdFlowError):
    kind = "non-finite-loss"

    def __init__(self, epoch, message=None):
        self.epoch = epoch
        super().__init__(message or f"loss became non-finite at epoch {epoch}")


class NonFiniteGradient(CrowdFlowError):
    kind = "non-finite-gradient"


class MissingContext(CrowdFlowError):
    kind = "missing-context"


class AllMasked(CrowdFlowError):
    kind = "all-masked"


class EmptyColumn(CrowdFlowError):
    kind = "empty-column"


class EmptyRange(CrowdFlowError):
    kind = "empty-range"
