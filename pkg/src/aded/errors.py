class AdedError(Exception):
    pass


class MalformedInputError(AdedError, ValueError):
    pass


class MatrixFormatError(AdedError):
    """Base class for matrix file load failures."""


class BadMagicError(MatrixFormatError):
    pass


class UnsupportedVersionError(MatrixFormatError):
    pass


class TruncatedFileError(MatrixFormatError):
    pass


class ChecksumMismatchError(MatrixFormatError):
    pass


class TargetError(AdedError):
    """Base class for verification-model failures."""


class TransportError(TargetError):
    pass


class MalformedResponseError(TargetError):
    pass


class NodeCountMismatchError(TargetError):
    pass


class ContractViolationError(AdedError, ValueError):
    pass


class ScenarioError(AdedError, ValueError):
    pass
