"""Exception types shared across the package."""


class SkinbenchError(Exception):
    """Base class for all data/processing errors raised by this package."""


class CascadeError(SkinbenchError):
    """Cascade file malformed or uses an unsupported construct."""


class ExtractionError(SkinbenchError):
    """Skin-color extraction could not produce an estimate."""


class RecolorError(SkinbenchError):
    """Texture recoloring preconditions violated."""


class ManifestError(SkinbenchError):
    """Manifest missing, malformed, or referencing absent files."""


class ReportError(SkinbenchError):
    """Report generation lacks the inputs it needs."""
