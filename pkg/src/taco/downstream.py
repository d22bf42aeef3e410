"""Classification accuracy of reconstructed frames.

Features are 16x16x3 box-downsampled frames in [0, 1]. Two classifiers:
k-nearest-neighbours (Euclidean) and one-vs-rest least squares with a small
ridge term.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .codecs import LOSSLESS, Codec
from .data import DatasetManifest, Split, TactileFrame
from .errors import EmptyTrainSet, SingularSystem, UnlabeledManifest
from .metrics import RAW_BPP

FEATURE_SIDE = 16
RIDGE = 1e-6


class Classifier(enum.Enum):
    KNN = "knn"
    LINEAR = "linear"


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    label: int = -1


@dataclass(frozen=True)
class AccuracyPoint:
    bpp: float
    top1: float
    classifier: Classifier
    quality: str = ""
    codec: str = ""

    def __post_init__(self):
        if not 0.0 <= self.top1 <= 1.0:
            raise ValueError("top1 must lie in [0, 1]")


def _box_axis(n: int, out: int) -> np.ndarray:
    """(out, n) averaging matrix; source sample i spreads over the output
    cells its unit interval [i, i+1) overlaps, scaled by n/out."""
    m = np.zeros((out, n))
    edges = np.arange(out + 1) * n / out
    for j in range(out):
        lo, hi = edges[j], edges[j + 1]
        for i in range(int(np.floor(lo)), int(np.ceil(hi))):
            m[j, i] = min(hi, i + 1) - max(lo, i)
        m[j] /= hi - lo
    return m


def extract_features(frame: TactileFrame, label: int = -1) -> FeatureVector:
    """Area-average down to 16x16 per channel, flatten interleaved, scale to [0, 1].

    For sizes divisible by 16 this is a plain box filter; other sizes use
    fractional (area-weighted) boxes, which also upsamples small frames.
    """
    px = frame.pixels.astype(np.float64)
    ry = _box_axis(frame.height, FEATURE_SIDE)
    rx = _box_axis(frame.width, FEATURE_SIDE)
    small = np.einsum("ij,jkc,lk->ilc", ry, px, rx)
    return FeatureVector((small / 255.0).reshape(-1), label)


def _stack(train: Sequence[FeatureVector]):
    if len(train) == 0:
        raise EmptyTrainSet("no training examples")
    x = np.stack([t.values for t in train]).astype(np.float64)
    y = np.array([t.label for t in train], dtype=np.int64)
    return x, y


class KnnClassifier:
    def __init__(self, train: Sequence[FeatureVector], k: int = 5):
        self.x, self.y = _stack(train)
        if not 1 <= k <= len(self.y):
            raise ValueError(f"k must lie in [1, {len(self.y)}]")
        self.k = k

    def predict_one(self, q: np.ndarray) -> int:
        d = np.sqrt(np.sum((self.x - q) ** 2, axis=1))
        # (distance, label) ordering makes the neighbour set order-free
        idx = np.lexsort((self.y, d))[:self.k]
        labels, dists = self.y[idx], d[idx]
        best = None
        for c in np.unique(labels):
            sel = labels == c
            key = (-int(sel.sum()), float(dists[sel].mean()), int(c))
            if best is None or key < best:
                best = key
        return best[2]

    def predict(self, queries: np.ndarray) -> np.ndarray:
        return np.array([self.predict_one(q) for q in np.atleast_2d(queries)])


class LinearClassifier:
    """One-vs-rest least squares on one-hot targets with a bias column."""

    def __init__(self, train: Sequence[FeatureVector], ridge: float = RIDGE):
        x, y = _stack(train)
        self.classes = np.unique(y)
        a = np.hstack([x, np.ones((len(x), 1))])
        t = (y[:, None] == self.classes[None, :]).astype(np.float64)
        gram = a.T @ a
        if ridge > 0:
            gram = gram + ridge * np.eye(gram.shape[0])
        try:
            if ridge <= 0 and np.linalg.matrix_rank(gram) < gram.shape[0]:
                raise np.linalg.LinAlgError("rank deficient")
            self.w = np.linalg.solve(gram, a.T @ t)
        except np.linalg.LinAlgError as exc:
            raise SingularSystem(f"normal equations are singular: {exc}") from exc

    def scores(self, queries: np.ndarray) -> np.ndarray:
        q = np.atleast_2d(queries)
        return np.hstack([q, np.ones((len(q), 1))]) @ self.w

    def predict(self, queries: np.ndarray) -> np.ndarray:
        # argmax returns the first maximum, i.e. the lowest class id on ties
        return self.classes[np.argmax(self.scores(queries), axis=1)]


def knn_classify(train: Sequence[FeatureVector], query: FeatureVector, k: int = 5) -> int:
    return int(KnnClassifier(train, k).predict_one(np.asarray(query.values, float)))


def linear_classify(train: Sequence[FeatureVector], query: FeatureVector,
                    ridge: float = RIDGE) -> int:
    return int(LinearClassifier(train, ridge).predict(np.asarray(query.values, float))[0])


def top1(pred: Sequence[int], truth: Sequence[int]) -> float:
    pred, truth = np.asarray(pred), np.asarray(truth)
    return float(np.mean(pred == truth)) if len(truth) else 0.0


def _fit_score(train, test, classifier: Classifier, k: int) -> float:
    qx = np.stack([t.values for t in test])
    truth = [t.label for t in test]
    if classifier is Classifier.KNN:
        model = KnnClassifier(train, min(k, len(train)))
    else:
        model = LinearClassifier(train)
    return top1(model.predict(qx), truth)


def label_ids(manifest: DatasetManifest) -> dict:
    labels = sorted({e.label for e in manifest.entries})
    return {name: i for i, name in enumerate(labels)}


def accuracy_under_compression(manifest: DatasetManifest, codec: Optional[Codec],
                               qualities: Sequence[str], classifier: Classifier = Classifier.KNN,
                               k: int = 5, frames: Optional[Sequence[TactileFrame]] = None
                               ) -> list:
    """Top-1 test accuracy per quality, after coding train and test frames.

    The first point is always the uncompressed baseline at 24 bpp. The
    manifest must carry labels and a Train/Test assignment.
    """
    if any(not e.label for e in manifest.entries):
        raise UnlabeledManifest("every entry needs a label")
    if not manifest.subset(Split.TRAIN) or not manifest.subset(Split.TEST):
        raise UnlabeledManifest("manifest has no train/test split; run split_dataset first")
    ids = label_ids(manifest)
    frames = list(frames) if frames is not None else manifest.load_frames()
    labels = [ids[e.label] for e in manifest.entries]
    is_train = [e.split is Split.TRAIN for e in manifest.entries]

    def evaluate(recon):
        feats = [extract_features(f, lab) for f, lab in zip(recon, labels)]
        train = [f for f, t in zip(feats, is_train) if t]
        test = [f for f, t in zip(feats, is_train) if not t]
        return _fit_score(train, test, classifier, k)

    points = [AccuracyPoint(RAW_BPP, evaluate(frames), classifier, "uncompressed", "none")]
    if codec is None:
        return points
    for q in qualities:
        bits, pixels, recon = 0, 0, []
        for f in frames:
            blob = codec.encode(f, q)
            recon.append(codec.decode(blob))
            bits += 8 * len(blob)
            pixels += f.width * f.height
        points.append(AccuracyPoint(bits / pixels, evaluate(recon), classifier,
                                    LOSSLESS if codec.lossless else str(q), codec.id))
    return points


def write_accuracy_csv(points: Sequence[AccuracyPoint], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["codec", "quality", "bpp", "classifier", "top1"])
        for p in points:
            w.writerow([p.codec, p.quality, f"{p.bpp:.6f}", p.classifier.value, f"{p.top1:.6f}"])


def accuracy_svg(points: Sequence[AccuracyPoint], title: str) -> str:
    from .bench import svg_line_plot

    series = {}
    for p in points:
        series.setdefault(p.classifier.value, []).append((p.bpp, p.top1))
    series = {k: sorted(v) for k, v in series.items()}
    return svg_line_plot(series, title, "bits per pixel (log scale)", "top-1 accuracy",
                         logx=True)


def write_accuracy_svg(points: Sequence[AccuracyPoint], path, title: str = "") -> None:
    Path(path).write_text(accuracy_svg(points, title or "accuracy vs rate"))
