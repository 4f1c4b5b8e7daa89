"""Exception hierarchy shared across the workbench."""


class FunduslabError(Exception):
    """Base class for all workbench errors."""


class ConfigError(FunduslabError):
    """Invalid configuration value or unknown key."""


class LayoutError(FunduslabError):
    """Dataset root does not match the declared layout convention."""


class DataIntegrityError(FunduslabError):
    """Images, masks, or labels are inconsistent with each other."""


class ChannelError(FunduslabError):
    """Raw image does not have exactly three channels."""


class GeometryError(FunduslabError):
    """Annotation geometry falls outside image bounds or is malformed."""


class ShapeError(FunduslabError):
    """Array arguments have incompatible shapes."""


class MissingLabelError(FunduslabError):
    """Operation requires labels the dataset does not carry."""


class LabelError(FunduslabError):
    """Grade label outside the valid range."""


class NormalizationError(FunduslabError):
    """Per-pixel class scores are not a probability distribution."""


class NumericalError(FunduslabError):
    """A loss component is NaN or otherwise non-finite."""


class DegenerateLabelsError(FunduslabError):
    """Metric is undefined for the given label distribution."""


class UnsupportedBackboneError(FunduslabError):
    """Operation does not apply to this model backbone."""


class StateError(FunduslabError):
    """Object is in the wrong state for the requested transition."""
