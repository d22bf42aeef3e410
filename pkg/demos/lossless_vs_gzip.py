# Lossless coding of a tactile frame, next to gzip on the same bytes.

import gzip

import numpy as np

from taco.lossless import LosslessConfig, Predictor, decode_lossless, encode_lossless
from taco.metrics import compression_ratio, format_ratio
from taco.synthetic import gradient_frame, random_frame, tactile_frame

rng = np.random.default_rng(0)
frames = {
    "gel contact 240x320": tactile_frame(240, 320, rng),
    "smooth gradient 240x320": gradient_frame(240, 320, rng),
    "uniform noise 240x320": random_frame(240, 320, rng),
}

print(f"{'frame':28s} {'taco':>8s} {'gzip -9':>8s}   (bits/Byte)")
for name, f in frames.items():
    blob = encode_lossless(f)
    assert decode_lossless(blob) == f  # bit exact, always
    ours = 8 * len(blob) / f.nbytes
    gz = 8 * len(gzip.compress(f.pixels.tobytes(), 9)) / f.nbytes
    print(f"{name:28s} {ours:8.3f} {gz:8.3f}   ratio {format_ratio(ours)}")

# Noise stays at ~8 bits/Byte: nothing to predict. The header costs a few
# dozen bytes on top.

# What each modelling step buys on the contact frame:
f = frames["gel contact 240x320"]
for label, cfg in [("no prediction, one context", LosslessConfig(Predictor.ZERO, 1)),
                   ("left neighbour, one context", LosslessConfig(Predictor.LEFT, 1)),
                   ("median edge, one context", LosslessConfig(Predictor.MEDIAN_EDGE, 1)),
                   ("median edge, 8 contexts", LosslessConfig())]:
    bpb = 8 * len(encode_lossless(f, cfg)) / f.nbytes
    print(f"  {label:30s} {bpb:.3f} bits/Byte  ({compression_ratio(bpb):.2f}x)")
