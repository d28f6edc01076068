"""Exception hierarchy shared by every embedauth module."""


class EmbedAuthError(Exception):
    """Base class; ``kind`` is the machine-readable error name."""

    @property
    def kind(self) -> str:
        return type(self).__name__


class EmptyClass(EmbedAuthError, ValueError):
    pass


class EmptyInput(EmbedAuthError, ValueError):
    pass


class InsufficientSamples(EmbedAuthError, ValueError):
    pass


class SingularCovariance(EmbedAuthError, ValueError):
    pass


class MissingClass(EmbedAuthError, ValueError):
    def __init__(self, class_id):
        super().__init__(f"class {class_id} has no reference samples")
        self.class_id = class_id


class UnknownClass(EmbedAuthError, ValueError):
    def __init__(self, label):
        super().__init__(f"label {label} is not a reference class")
        self.label = label


class DimMismatch(EmbedAuthError, ValueError):
    pass


class EmptySubmission(EmbedAuthError, ValueError):
    pass


class DuplicateClient(EmbedAuthError, ValueError):
    pass


class UnknownClient(EmbedAuthError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class EmptyRound(EmbedAuthError, ValueError):
    pass


class TooFewClients(EmbedAuthError, ValueError):
    pass


class EmptyDataset(EmbedAuthError, ValueError):
    pass


class ParseError(EmbedAuthError, ValueError):
    pass


class UnsupportedVersion(EmbedAuthError, ValueError):
    pass


class ConfigError(EmbedAuthError, ValueError):
    pass


class FingerprintMismatch(EmbedAuthError, ValueError):
    pass
