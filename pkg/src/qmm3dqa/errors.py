"""Exception hierarchy for the quality-assessment pipeline.

Input/parse problems derive from :class:`InputError`, runtime/numeric
problems from :class:`RuntimeFailure`; the CLI maps the two branches to
exit codes 2 and 3.
"""


class QmmError(Exception):
    """Base class for all errors raised by this package."""


class InputError(QmmError):
    """Malformed or unusable input (file, manifest, flag combination)."""


class RuntimeFailure(QmmError):
    """Failure while executing a pipeline stage on valid inputs."""


# -- model_io -----------------------------------------------------------

class ParseError(InputError):
    """Malformed header or record in a model or manifest file."""


class UnsupportedFormat(InputError):
    """File extension or declared format outside the supported set."""


class EmptyModel(InputError):
    """Model file contains no vertices."""


class MissingField(InputError):
    """Manifest entry lacks a required field."""


class NonFiniteMos(InputError):
    """Manifest entry carries a NaN or infinite subjective score."""


class DegenerateModel(RuntimeFailure):
    """All points coincide; the bounding box has zero extent."""


# -- projector ----------------------------------------------------------

class ResolutionTooSmall(RuntimeFailure):
    """Render resolution below the minimum usable size."""


# -- sampler ------------------------------------------------------------

class ConfigMismatch(RuntimeFailure):
    """Grid configuration incompatible with the projection resolution."""


class CellTooSmall(RuntimeFailure):
    """Grid cell smaller than the requested mini-patch."""


class AllViewsBlank(RuntimeFailure):
    """No view contains a single cell with foreground coverage."""


# -- quality_loss / predictor ------------------------------------------

class LengthMismatch(RuntimeFailure):
    """Prediction and label vectors differ in length."""


class EmptyBatch(RuntimeFailure):
    """Loss requested on an empty batch."""


class ShapeMismatch(RuntimeFailure):
    """Feature vector incompatible with the regression head."""


class EmptyManifest(InputError):
    """Training requested on a manifest with no entries."""


class DivergedLoss(RuntimeFailure):
    """Training loss became non-finite."""


class BridgeError(RuntimeFailure):
    """External feature bridge unavailable or protocol violation."""


# -- evaluation ---------------------------------------------------------

class DegenerateLabels(RuntimeFailure):
    """All subjective scores equal; nothing to fit or correlate."""


class TooFewSamples(RuntimeFailure):
    """Fewer samples than the metric protocol requires."""


class TooFewGroups(RuntimeFailure):
    """Fewer content groups than requested folds."""
