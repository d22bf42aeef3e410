# Turn a force-sensor log into an image, code it, and get the forces back.

from pathlib import Path

import numpy as np

from taco.data import ForceImageMapping, force_to_frame, frame_to_force, save_force_csv
from taco.lossless import decode_lossless, encode_lossless
from taco.synthetic import random_force_records

out = Path("demo_out")
out.mkdir(exist_ok=True)

rng = np.random.default_rng(2)
records = random_force_records(400, 60, rng, full_scale=10.0)  # 2 s at 200 Hz, 60 taxels
save_force_csv(records, out / "log.csv")

mapping = ForceImageMapping.from_range(10.0)  # 10 N span per axis -> 0..255
frame = force_to_frame(records, mapping)
print("stacked image:", frame.pixels.shape)  # T x 60 x 3

blob = encode_lossless(frame)
print(f"{len(records) * 60 * 3 * 8} bytes as float64 forces, "
      f"{frame.nbytes} as an image, {len(blob)} coded")

back = frame_to_force(decode_lossless(blob))
err = np.abs(np.stack([r.forces for r in back]) - np.stack([r.forces for r in records]))
print(f"worst force error {err.max():.4f} N (half a level is {mapping.scale[0] / 2:.4f} N)")

# The same log laid out as 5x12 taxel tiles, one tile per time step:
tiles = force_to_frame(records, mapping, grid=(5, 12))
print("tiled image:", tiles.pixels.shape)
