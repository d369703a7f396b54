from .tables import (CDF_TOTAL, DEFAULT_K_MAX, DEFAULT_K_MIN, SIGMA_MAX,
                     SIGMA_MIN, TableBatch, build_laplace_cdf,
                     build_laplace_cdf_batch, build_uniform_cdf)
from .range_coder import (StreamDecoder, StreamEncoder, decode_symbols,
                          encode_symbols)
from .clients import ForeignCoder, LocalCoder, SubprocessCoder

__all__ = [
    "CDF_TOTAL", "DEFAULT_K_MAX", "DEFAULT_K_MIN", "SIGMA_MAX", "SIGMA_MIN",
    "TableBatch", "build_laplace_cdf", "build_laplace_cdf_batch",
    "build_uniform_cdf", "StreamDecoder", "StreamEncoder", "decode_symbols",
    "encode_symbols", "ForeignCoder", "LocalCoder", "SubprocessCoder",
]
