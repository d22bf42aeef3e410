# Does lossy coding hurt a classifier? Three synthetic contact classes,
# a trajectory-level 60/40 split, k-NN and least squares on 16x16 features.

from pathlib import Path

from taco.codecs import LossyCodec
from taco.data import DatasetManifest, split_dataset
from taco.downstream import (
    Classifier,
    accuracy_under_compression,
    write_accuracy_csv,
    write_accuracy_svg,
)
from taco.synthetic import class_corpus, write_corpus

out = Path("demo_out")
frames, labels, trajs = class_corpus(3, 6, 5, noise=6.0, seed=3)
manifest = split_dataset(
    DatasetManifest.load(write_corpus(frames, out / "classes", "classes", labels, trajs)),
    0.6, seed=0)

points = []
for clf in Classifier:
    points += accuracy_under_compression(manifest, LossyCodec(), ["0", "1", "2", "3"], clf,
                                         frames=frames)
for p in points:
    print(f"{p.classifier.value:6s} {p.quality:13s} {p.bpp:7.3f} bpp  top-1 {p.top1:.3f}")

write_accuracy_csv(points, out / "accuracy.csv")
write_accuracy_svg(points, out / "accuracy.svg", "synthetic contact classes")
print("wrote", out / "accuracy.csv", "and", out / "accuracy.svg")
