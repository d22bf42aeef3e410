"""Compression of tactile signals.

Two codecs operate on 8-bit three-channel tactile frames (visuo-tactile
images or stacked force readings): ``taco-ll-lite``, a predictive lossless
coder, and ``taco-l-lite``, a block-transform lossy coder. Both share an
adaptive range coder and the TACB container. Around them sit the rate and
quality metrics, a benchmark runner and a downstream classification probe.
"""

from .container import Header
from .data import (
    DatasetManifest,
    ForceImageMapping,
    ForceRecord,
    ManifestEntry,
    SensorKind,
    Split,
    TactileFrame,
    force_to_frame,
    frame_to_force,
    load_frame,
    pad_frame,
    split_dataset,
)
from .entropy import Bitstream, ProbabilityModel, decode_symbols, encode_symbols
from .lossless import LosslessConfig, Predictor, bits_per_byte_of, decode_lossless, encode_lossless
from .lossy import QUALITIES, QualityPoint, decode_lossy, encode_lossy, rd_cost, rd_sweep
from .metrics import RdCurve, RdPoint, bandwidth_mbps, bd_rate, bpp_of, ms_ssim, psnr, rmse_map
from .tokenizer import PatchGeometry, TokenStream, detokenize, tokenize

__version__ = "0.1.0"
