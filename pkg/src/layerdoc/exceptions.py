"""Exception hierarchy shared across the toolkit."""


class LayerdocError(Exception):
    pass


class StructuralError(LayerdocError, ValueError):
    """Shapes or dimensions of rasters/masks/layers do not line up."""


class PreconditionError(LayerdocError, ValueError):
    pass


class DegenerateInputError(LayerdocError, ValueError):
    """Input is well-formed but the quantity is undefined on it."""


class TransportError(LayerdocError):
    """A remote backend could not be reached within the retry budget."""


class ProtocolError(LayerdocError):
    """A backend answered, but the answer does not follow the response grammar."""

    def __init__(self, message, raw_response=None):
        super().__init__(message)
        self.raw_response = raw_response


class FormatError(LayerdocError, ValueError):
    """Reasoner output violates the tagged think/decision/prompt grammar."""

    reason = "format"

    def __init__(self, message, raw=None):
        super().__init__(message)
        self.raw = raw


class MissingTagError(FormatError):
    reason = "missing_tag"


class DuplicateTagError(FormatError):
    reason = "duplicate_tag"


class TagOrderError(FormatError):
    reason = "tag_order"


class DecisionTokenError(FormatError):
    reason = "decision_token"


class PromptMismatchError(FormatError):
    reason = "prompt_mismatch"


class ManifestError(LayerdocError, ValueError):
    pass
