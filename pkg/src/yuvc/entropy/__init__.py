"""Rate estimation and bitstream entropy coding."""

from .chunks import BitChunk, decode_chunk, encode_chunk
from .priors import (
    SCALE_MIN,
    FactorizedPrior,
    estimate_rate,
    gaussian_bits,
    gaussian_likelihood,
    gaussian_table_set,
    indexes_for_scales,
)
from .rans import decode_with_indexes, encode_with_indexes
from .tables import PRECISION, TOTAL_FREQ, TableSet, quantize_pmf
from .backend import accelerated_available, get_coder

__all__ = [
    "BitChunk",
    "FactorizedPrior",
    "PRECISION",
    "SCALE_MIN",
    "TOTAL_FREQ",
    "TableSet",
    "accelerated_available",
    "decode_chunk",
    "decode_with_indexes",
    "encode_chunk",
    "encode_with_indexes",
    "estimate_rate",
    "gaussian_bits",
    "gaussian_likelihood",
    "gaussian_table_set",
    "get_coder",
    "indexes_for_scales",
    "quantize_pmf",
]
