"""Exception hierarchy shared by all pipeline stages."""


class VoxwheatError(Exception):
    """Base class for every error raised by this package."""


# --- PLY ingestion -------------------------------------------------------

class ParseError(VoxwheatError):
    def __init__(self, line, reason):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class TruncatedError(VoxwheatError):
    """Payload size disagrees with the element counts declared in the header."""


class UnsupportedFormatError(VoxwheatError):
    pass


class DataError(VoxwheatError):
    def __init__(self, index, reason="non-finite coordinate"):
        super().__init__(f"vertex {index}: {reason}")
        self.index = index


class InvalidSpecError(VoxwheatError):
    pass


# --- batching / voxelization --------------------------------------------

class InvalidBatchError(VoxwheatError):
    pass


class InvalidResolutionError(VoxwheatError):
    pass


class PadError(VoxwheatError):
    def __init__(self, axis, size, limit):
        super().__init__(f"axis {axis}: size {size} exceeds envelope {limit}")
        self.axis = axis


# --- dataset --------------------------------------------------------------

class LabelError(VoxwheatError):
    pass


class FoldError(VoxwheatError):
    pass


class ManifestError(VoxwheatError):
    pass


# --- architectures --------------------------------------------------------

class SampleError(VoxwheatError):
    pass


class ShapeError(VoxwheatError):
    pass


class SpecDocumentError(VoxwheatError):
    pass


# --- tensor files ---------------------------------------------------------

class TensorFormatError(VoxwheatError):
    def __init__(self, offset, reason):
        super().__init__(f"byte {offset}: {reason}")
        self.offset = offset
        self.reason = reason
