"""Exception types shared across the codec."""


class CodecError(Exception):
    """Base class for all codec-specific failures."""


class TruncatedFileError(CodecError):
    """Raw YUV input ended before the requested frame count."""


class BitstreamError(CodecError):
    """Malformed, corrupted or incompatible bitstream."""


class ChecksumMismatchError(BitstreamError):
    """Bitstream was produced with a different model checkpoint."""


class EntropyDecodeError(BitstreamError):
    """Entropy-coded chunk failed its integrity checks."""


class StageDivergenceError(CodecError):
    """A training stage diverged (loss blew up past the abort threshold)."""
