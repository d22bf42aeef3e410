# Sweep the lossy codec over its four quality points and compare curves.

import numpy as np

from taco.lossy import QUALITIES, QualityPoint, rd_sweep
from taco.metrics import RdCurve, bandwidth_mbps, bd_rate
from taco.synthetic import tactile_frame

rng = np.random.default_rng(1)
frames = [tactile_frame(240, 320, rng) for _ in range(4)]

curve = rd_sweep(frames, QUALITIES, "taco-l-lite")
for p in curve.points:
    print(f"{p.label}: {p.bpp:.3f} bpp  {p.psnr:.2f} dB  ms-ssim {p.ms_ssim:.4f}")

# A coarser ladder of custom steps traces a second curve. BD-rate says how
# much more (or less) rate it needs at equal PSNR.
steps = [QualityPoint.custom(s) for s in (96, 56, 30, 20)]
other = rd_sweep(frames, steps, "coarser ladder")
print(f"BD-rate of the coarser ladder vs the default: {bd_rate(curve, other):+.2f}%")

# Sanity: a curve needing exactly twice the bits is +100%.
doubled = RdCurve.from_pairs(curve.rates() * 2, curve.qualities())
print(f"doubled rate: {bd_rate(curve, doubled):+.2f}%")

# What the finest point would cost as a live 640x480 stream at 30 fps:
best = curve.points[-1]
print(f"{best.bpp:.3f} bpp at 640x480x30 -> {bandwidth_mbps(best.bpp, 640, 480, 30):.2f} Mbps "
      f"(raw: {bandwidth_mbps(24, 640, 480, 30):.1f} Mbps)")
