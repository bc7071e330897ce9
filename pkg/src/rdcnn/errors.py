"""Exception hierarchy shared by every rdcnn module."""


class RdcnnError(Exception):
    """Base class for all errors raised by rdcnn."""


class ShapeError(RdcnnError, ValueError):
    """An array has the wrong shape for the requested operation.

    ``dimension`` names the offending axis (e.g. ``"channels"``) so callers
    can report it without parsing the message.
    """

    def __init__(self, message, dimension=None):
        super().__init__(message)
        self.dimension = dimension


class ConfigError(RdcnnError, ValueError):
    """Invalid configuration value."""


class ImageTooSmallError(ShapeError):
    """The image cannot survive the requested number of blocks."""

    def __init__(self, message, max_blocks):
        super().__init__(message, dimension="blocks")
        self.max_blocks = max_blocks


class NonFiniteError(RdcnnError, ValueError):
    """NaN or infinite value where only finite reals are allowed."""


class FormatError(RdcnnError):
    """A file does not follow its declared binary layout.

    ``offset`` is the byte offset where decoding failed, when known.
    """

    def __init__(self, message, path=None, offset=None):
        parts = [message]
        if path is not None:
            parts.append(f"file={path}")
        if offset is not None:
            parts.append(f"offset={offset}")
        super().__init__(" | ".join(parts))
        self.path = path
        self.offset = offset


class CorruptHeaderError(FormatError):
    pass


class SizeMismatchError(FormatError):
    pass


class UnsupportedVersionError(FormatError):
    pass
