"""Deterministic synthetic corpora standing in for real tactile datasets."""

from __future__ import annotations

from pathlib import Path
from typing import Optional

import numpy as np

from .data import (
    DATASET_SHAPES,
    DatasetManifest,
    ForceImageMapping,
    ForceRecord,
    ManifestEntry,
    SensorKind,
    TactileFrame,
    force_to_frame,
    save_frame,
)


def _u8(x: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(x + 0.5), 0, 255).astype(np.uint8)


def gradient_frame(h: int, w: int, rng: np.random.Generator, noise: float = 1.5) -> TactileFrame:
    """Smooth linear ramps per channel plus a little Gaussian noise."""
    y, x = np.mgrid[:h, :w].astype(float)
    chans = []
    for _ in range(3):
        gx, gy = rng.uniform(-1, 1, 2) * 160.0
        base = rng.uniform(40, 215)
        chans.append(base + gx * (x / max(w - 1, 1) - 0.5) + gy * (y / max(h - 1, 1) - 0.5))
    img = np.stack(chans, -1) + rng.normal(0, noise, (h, w, 3))
    return TactileFrame(_u8(img))


def gradient_corpus(n: int = 100, h: int = 120, w: int = 160, seed: int = 0,
                    noise: float = 1.5) -> list:
    rng = np.random.default_rng(seed)
    return [gradient_frame(h, w, rng, noise) for _ in range(n)]


def tactile_frame(h: int, w: int, rng: np.random.Generator, contacts: Optional[int] = None,
                  noise: float = 2.0, markers: bool = True) -> TactileFrame:
    """Elastomer-like image: tinted shading, pressed blobs carrying an object
    texture, a grid of dark marker dots, sensor noise."""
    y, x = np.mgrid[:h, :w].astype(float)
    yn, xn = y / max(h - 1, 1), x / max(w - 1, 1)
    tint = rng.uniform(90, 170, 3)
    img = np.empty((h, w, 3))
    for c in range(3):
        img[..., c] = tint[c] + 25 * (xn - 0.5) * (c - 1) + 18 * (yn - 0.5) * (1 - c)
    k = rng.integers(1, 4) if contacts is None else contacts
    period = rng.uniform(3.0, 9.0)
    angle = rng.uniform(0, np.pi)
    ridges = np.sin(2 * np.pi * (x * np.cos(angle) + y * np.sin(angle)) / period)
    shear = np.zeros((h, w, 2))
    for _ in range(k):
        cy, cx = rng.uniform(0.2, 0.8, 2)
        r = rng.uniform(0.06, 0.2)
        depth = rng.uniform(20, 60)
        d2 = ((yn - cy) ** 2 + (xn - cx) ** 2) / (r * r)
        bump = depth * np.exp(-d2)
        # a lit rim on one side, shadow on the other, like photometric sensors
        shade = (xn - cx) / r * np.exp(-d2)
        tex = 0.35 * depth * ridges * np.exp(-d2)
        img[..., 0] += bump + 15 * shade + tex
        img[..., 1] += 0.6 * bump + 0.8 * tex
        img[..., 2] += 0.3 * bump - 15 * shade + 0.5 * tex
        shear += rng.normal(0, 3.0, 2) * np.exp(-d2)[..., None]
    if markers:
        step = max(4.0, min(h, w) / rng.uniform(7, 12))
        rad = max(0.8, step / 6)
        my = (y + shear[..., 0]) % step - step / 2
        mx = (x + shear[..., 1]) % step - step / 2
        dot = np.exp(-(mx * mx + my * my) / (2 * rad * rad))
        img *= (1 - 0.75 * dot)[..., None]
    img += rng.normal(0, noise, img.shape)
    return TactileFrame(_u8(img))


def random_force_records(t: int, n: int, rng: np.random.Generator,
                         full_scale: float = 10.0, rate_hz: float = 200.0) -> list:
    """Smooth random force trajectories for ``n`` taxels over ``t`` samples.

    ``full_scale`` is the width of the force range, as in
    :meth:`ForceImageMapping.from_range`; values stay inside it.
    """
    steps = rng.normal(0, full_scale * 0.025, (t, n, 3))
    f = np.cumsum(steps, axis=0)
    lim = 0.49 * full_scale
    f = np.clip(f, -lim, lim)
    return [ForceRecord(i / rate_hz, f[i]) for i in range(t)]


def force_frame(t: int, n: int, rng: np.random.Generator, full_scale: float = 10.0,
                grid: Optional[tuple] = None) -> TactileFrame:
    mapping = ForceImageMapping.from_range(full_scale)
    return force_to_frame(random_force_records(t, n, rng, full_scale), mapping, grid)


def random_frame(h: int, w: int, rng: np.random.Generator) -> TactileFrame:
    """Uniformly random samples, the incompressible worst case."""
    return TactileFrame(rng.integers(0, 256, (h, w, 3), dtype=np.uint8))


def class_corpus(n_classes: int = 3, trajectories_per_class: int = 4, frames_per_traj: int = 5,
                 h: int = 48, w: int = 64, noise: float = 2.0, seed: int = 0):
    """Well-separated classes for classifier tests.

    Class c is a colour pattern whose 16x16 features differ from every other
    class by far more than the per-frame noise. Returns (frames, labels,
    trajectory ids), grouped by trajectory.
    """
    rng = np.random.default_rng(seed)
    y, x = np.mgrid[:h, :w].astype(float)
    protos = []
    for c in range(n_classes):
        phase = 2 * np.pi * c / n_classes
        img = np.stack([
            128 + 90 * np.cos(phase + 2 * np.pi * x / w),
            128 + 90 * np.sin(phase + 2 * np.pi * y / h),
            128 + 90 * np.cos(phase + 2 * np.pi * (x + y) / (w + h)),
        ], -1)
        protos.append(img)
    frames, labels, trajs = [], [], []
    for c in range(n_classes):
        for t in range(trajectories_per_class):
            drift = rng.normal(0, 3.0, 3)
            for _ in range(frames_per_traj):
                img = protos[c] + drift + rng.normal(0, noise, (h, w, 3))
                frames.append(TactileFrame(_u8(img)))
                labels.append(f"class{c}")
                trajs.append(f"c{c}t{t}")
    return frames, labels, trajs


def write_corpus(frames, out_dir, name: str, labels=None, trajectories=None,
                 layout: Optional[tuple] = None) -> Path:
    """Write frames as PPM files plus a manifest JSON; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, f in enumerate(frames):
        fname = f"{name}_{i:04d}.ppm"
        save_frame(f, out / fname)
        entries.append(ManifestEntry(
            fname,
            labels[i] if labels is not None else "",
            trajectories[i] if trajectories is not None else f"t{i:04d}",
        ))
    kind = frames[0].sensor_kind if frames else SensorKind.VISUO
    manifest = DatasetManifest(name, kind, entries, layout=layout)
    path = out / f"{name}.json"
    manifest.save(path)
    return path


# Relative frame counts of the public datasets, used to weight random draws
# of resolutions.
DATASET_FRAMES = {
    "touchandgo": 13_900,
    "objectfolder": 100_000,
    "ssvtp": 4_500,
    "ycb-slide": 4_500,
    "objtac": 135_000,
}


def dataset_mix(n: int, seed: int = 0) -> list:
    """``n`` (dataset, (h, w)) draws, each dataset at least once, the rest
    in proportion to the dataset sizes."""
    names = list(DATASET_FRAMES)
    p = np.array([DATASET_FRAMES[k] for k in names], float)
    rng = np.random.default_rng(seed)
    draws = list(names) + list(rng.choice(names, size=max(0, n - len(names)), p=p / p.sum()))
    return [(d, DATASET_SHAPES[d]) for d in draws[:n]]
