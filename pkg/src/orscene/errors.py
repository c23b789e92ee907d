"""Exception types shared across the toolkit.

Each carries a short machine-readable ``code`` so the HTTP layer can map
failures onto the wire error shape without string matching.
"""


class OrsceneError(Exception):
    code = "internal"


class InputError(OrsceneError, ValueError):
    """Malformed or mutually inconsistent inputs (shape, counts, ranges)."""

    code = "input"


class MissingEntityError(OrsceneError, LookupError):
    """An entity_id was requested that the frame/span does not contain."""

    code = "missing_entity"


class DegenerateMaskError(OrsceneError, ValueError):
    """Mask too small for second-moment fitting."""

    code = "degenerate_mask"


class DecodeError(OrsceneError, ValueError):
    """Rendered image contains colors not attributable to any class."""

    code = "decode"


class ConfigError(OrsceneError, ValueError):
    """Render/export configuration cannot be satisfied."""

    code = "config"


class BackendError(OrsceneError, RuntimeError):
    """Diffusion backend unreachable or returned a malformed response."""

    code = "backend"


class NotFoundError(OrsceneError, LookupError):
    """Project, frame, revision or export does not exist."""

    code = "not_found"
