"""Exception hierarchy.

Every error raised on purpose by the package derives from :class:`UCCapError`,
which itself is a ``ValueError`` so callers that only guard against bad input
keep working.
"""


class UCCapError(ValueError):
    """Base class for all package errors."""

    code = "error"

    def to_dict(self):
        return {"error": self.code, "type": type(self).__name__, "message": str(self)}


# capability_core
class InvalidSpec(UCCapError):
    code = "invalid_spec"


class MissingSpec(InvalidSpec):
    code = "missing_spec"


class DegenerateSample(UCCapError):
    code = "degenerate_sample"


class QuantileCollapse(UCCapError):
    code = "quantile_collapse"


class TooFewSamples(UCCapError):
    code = "too_few_samples"


class NoFeasibleFamily(UCCapError):
    code = "no_feasible_family"


# uncertainty
class DegenerateBootstrap(UCCapError):
    code = "degenerate_bootstrap"


class TooFewBoot(UCCapError):
    code = "too_few_boot"


class NonpositiveSE(UCCapError):
    code = "nonpositive_se"


# features / risk model
class EmptyTrainingSet(UCCapError):
    code = "empty_training_set"


class SchemaMismatch(UCCapError):
    code = "schema_mismatch"


class LengthMismatch(UCCapError):
    code = "length_mismatch"


class NonfiniteLoss(UCCapError):
    code = "nonfinite_loss"


class EmptyValidation(UCCapError):
    code = "empty_validation"


class SchemaVersionMismatch(UCCapError):
    code = "schema_version_mismatch"


class CorruptFile(UCCapError):
    code = "corrupt_file"


# decision layer
class NonpositiveCost(UCCapError):
    code = "nonpositive_cost"


# metrics
class EmptyInput(UCCapError):
    code = "empty_input"


# simulation
class InfeasibleSpec(UCCapError):
    code = "infeasible_spec"


class GroupTooLarge(UCCapError):
    code = "group_too_large"


# cli_io
class ParseError(UCCapError):
    code = "parse_error"

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line

    def to_dict(self):
        d = super().to_dict()
        d["line"] = self.line
        return d


class InconsistentSpec(ParseError):
    code = "inconsistent_spec"


class EmptyDimension(UCCapError):
    code = "empty_dimension"
