class ExportError(Exception):
    """Base for everything this package raises on purpose."""


class ModelNotFound(ExportError):
    """Unknown model identifier, or a weights file that does not exist."""


class EmptyDataDirectory(ExportError):
    """The sample directory holds no readable images."""


class ShapeDrift(ExportError):
    """A layer produced differently shaped outputs for different samples."""
