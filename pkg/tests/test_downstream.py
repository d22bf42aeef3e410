import csv

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from taco.codecs import LossyCodec, StoreCodec
from taco.data import DatasetManifest, Split, TactileFrame, split_dataset
from taco.downstream import (
    AccuracyPoint,
    Classifier,
    FeatureVector,
    KnnClassifier,
    LinearClassifier,
    accuracy_under_compression,
    extract_features,
    knn_classify,
    label_ids,
    linear_classify,
    top1,
    write_accuracy_csv,
    write_accuracy_svg,
)
from taco.errors import EmptyTrainSet, SingularSystem, UnlabeledManifest
from taco.synthetic import class_corpus, tactile_frame, write_corpus


def _fv(values, label=-1):
    return FeatureVector(np.asarray(values, float), label)


def _blobs(centres, per_class, spread, seed):
    rng = np.random.default_rng(seed)
    out = []
    for label, c in enumerate(centres):
        for p in c + rng.normal(0, spread, (per_class, len(c))):
            out.append(_fv(p, label))
    return out


# ---------------------------------------------------------------- features

def test_constant_frame_features():
    for v in (0, 77, 255):
        for shape in ((16, 16), (48, 64), (5, 12), (37, 101)):
            f = TactileFrame(np.full(shape + (3,), v, np.uint8))
            fv = extract_features(f)
            assert fv.values.shape == (768,)
            assert np.allclose(fv.values, v / 255, atol=1e-12)


def test_sixteen_square_is_identity():
    f = tactile_frame(16, 16, np.random.default_rng(0))
    assert np.allclose(extract_features(f).values, f.pixels.reshape(-1) / 255, atol=1e-12)


def test_two_by_two_blocks_average_to_half():
    block = np.array([[0, 0], [255, 255]], np.uint8)
    px = np.repeat(np.tile(block, (16, 16))[..., None], 3, -1)
    assert np.allclose(extract_features(TactileFrame(px)).values, 0.5)


def test_box_filter_matches_reshape_mean():
    f = tactile_frame(64, 48, np.random.default_rng(1))
    want = f.pixels.reshape(16, 4, 16, 3, 3).mean(axis=(1, 3)) / 255
    assert np.allclose(extract_features(f).values, want.reshape(-1), atol=1e-12)


def test_fractional_boxes_preserve_mean():
    f = tactile_frame(37, 53, np.random.default_rng(2))
    feats = extract_features(f).values.reshape(16, 16, 3)
    assert np.allclose(feats.mean(axis=(0, 1)), f.pixels.mean(axis=(0, 1)) / 255, atol=1e-12)


# ---------------------------------------------------------------- k-NN

def test_knn_exact_match_with_k1():
    train = _blobs([np.zeros(4), np.ones(4)], 5, 0.3, 0)
    for t in train:
        assert knn_classify(train, t, k=1) == t.label


def test_knn_separated_clusters():
    centres = [np.zeros(8), np.full(8, 10.0)]
    train = _blobs(centres, 20, 0.2, 1)
    test = _blobs(centres, 30, 0.2, 2)
    pred = [knn_classify(train, q, k=3) for q in test]
    assert top1(pred, [q.label for q in test]) == 1.0


def test_knn_all_neighbours_is_global_majority():
    train = [_fv([0.0], 0), _fv([0.1], 0), _fv([5.0], 1), _fv([5.1], 1), _fv([5.2], 1)]
    for q in (-3.0, 0.05, 2.0, 9.0):
        assert knn_classify(train, _fv([q]), k=len(train)) == 1


def test_knn_tie_breaks():
    # one vote each; the nearer label wins
    train = [_fv([0.0], 4), _fv([3.0], 2)]
    assert knn_classify(train, _fv([1.0]), k=2) == 4
    # equal votes and equal mean distance: lowest class id
    train = [_fv([-1.0], 7), _fv([1.0], 3)]
    assert knn_classify(train, _fv([0.0]), k=2) == 3


@given(st.permutations(range(12)), st.integers(1, 12), st.integers(0, 2**16))
def test_knn_order_invariant(perm, k, seed):
    rng = np.random.default_rng(seed)
    # coarse integer grid so exact distance ties are common
    train = [_fv(rng.integers(0, 3, 2), int(rng.integers(0, 3))) for _ in range(12)]
    queries = rng.integers(0, 3, (6, 2)).astype(float)
    a = KnnClassifier(train, k).predict(queries)
    b = KnnClassifier([train[i] for i in perm], k).predict(queries)
    assert a.tolist() == b.tolist()


def test_knn_errors():
    with pytest.raises(EmptyTrainSet):
        knn_classify([], _fv([0.0]), k=1)
    with pytest.raises(ValueError):
        knn_classify([_fv([0.0], 0)], _fv([0.0]), k=2)


# ---------------------------------------------------------------- linear

def test_linear_boundary_at_zero():
    train = [_fv([-1.0], 0), _fv([1.0], 1)]
    model = LinearClassifier(train)
    assert model.predict(np.array([[-0.01], [0.01], [-5.0], [5.0]])).tolist() == [0, 1, 0, 1]
    s = model.scores(np.array([[0.0]]))[0]
    assert s[0] == pytest.approx(s[1], abs=1e-6)


def test_linear_exact_tie_goes_to_lowest_class():
    train = [_fv([0.0], 5), _fv([0.0], 2)]
    assert linear_classify(train, _fv([0.0])) == 2


def test_linear_separable_set_is_fit_perfectly():
    # least squares is not a max-margin fit, so give the set a wide margin
    # along the separating direction relative to the spread across it
    rng = np.random.default_rng(3)
    w = rng.normal(size=6)
    w /= np.linalg.norm(w)
    y = rng.integers(0, 2, 200)
    x = rng.normal(0, 1.0, (200, 6))
    x -= np.outer(x @ w, w)
    x += np.outer(np.where(y == 1, 1.0, -1.0) * rng.uniform(1.0, 3.0, 200), w)
    assert np.all((x @ w > 0) == (y == 1))
    train = [_fv(p, int(c)) for p, c in zip(x, y)]
    model = LinearClassifier(train)
    assert top1(model.predict(x), y) == 1.0


def test_duplicated_column_gives_same_predictions():
    centres = [np.zeros(5), np.ones(5) * 2, np.array([2.0, 0, 2, 0, 2])]
    train = _blobs(centres, 15, 0.6, 4)
    test = _blobs(centres, 20, 0.6, 5)

    def dup(fs):
        return [_fv(np.append(f.values, f.values[0]), f.label) for f in fs]

    plain = LinearClassifier(train).predict(np.stack([t.values for t in test]))
    doubled = LinearClassifier(dup(train)).predict(np.stack([t.values for t in dup(test)]))
    assert plain.tolist() == doubled.tolist()
    # without the ridge term the duplicated column makes the system singular
    with pytest.raises(SingularSystem):
        LinearClassifier(dup(train), ridge=0.0)


def test_linear_empty_train():
    with pytest.raises(EmptyTrainSet):
        linear_classify([], _fv([0.0]))


# ---------------------------------------------------------------- accuracy sweeps

@pytest.fixture(scope="module")
def labelled(tmp_path_factory):
    frames, labels, trajs = class_corpus(3, 5, 4, seed=7)
    path = write_corpus(frames, tmp_path_factory.mktemp("cls"), "cls", labels, trajs)
    return split_dataset(DatasetManifest.load(path), 0.6, seed=0), frames


def test_split_is_sixty_forty_by_trajectory(labelled):
    m, _ = labelled
    train = {e.trajectory_id for e in m.subset(Split.TRAIN)}
    test = {e.trajectory_id for e in m.subset(Split.TEST)}
    assert len(train) == 9 and len(test) == 6 and not train & test
    assert label_ids(m) == {"class0": 0, "class1": 1, "class2": 2}


@pytest.mark.parametrize("clf", list(Classifier))
def test_store_codec_equals_baseline(labelled, clf):
    m, frames = labelled
    pts = accuracy_under_compression(m, StoreCodec(), ["lossless"], clf, frames=frames)
    assert pts[0].bpp == 24.0 and pts[0].quality == "uncompressed"
    assert pts[1].top1 == pts[0].top1
    assert pts[1].codec == "store" and pts[1].bpp > 24.0


@pytest.mark.parametrize("clf", list(Classifier))
def test_separated_classes_survive_compression(labelled, clf):
    m, frames = labelled
    pts = accuracy_under_compression(m, LossyCodec(), ["0", "3"], clf, frames=frames)
    base, coarse, fine = pts
    assert base.top1 == 1.0 and fine.top1 == 1.0
    assert fine.top1 >= coarse.top1 - 0.05
    assert coarse.bpp < fine.bpp < 24.0
    assert [p.quality for p in pts] == ["uncompressed", "0", "3"]


def test_manifest_loading_matches_given_frames(labelled):
    m, frames = labelled
    a = accuracy_under_compression(m, None, [], Classifier.KNN)
    b = accuracy_under_compression(m, None, [], Classifier.KNN, frames=frames)
    assert a == b and len(a) == 1


def test_unlabelled_or_unsplit_manifest(tmp_path, labelled):
    frames = [tactile_frame(16, 16, np.random.default_rng(i)) for i in range(4)]
    m = DatasetManifest.load(write_corpus(frames, tmp_path, "nolab"))
    with pytest.raises(UnlabeledManifest):
        accuracy_under_compression(m, None, [], frames=frames)
    m2, frames2 = labelled
    unsplit = DatasetManifest.from_dict(
        {**m2.to_dict(), "entries": [{**e, "split": "unassigned"} for e in m2.to_dict()["entries"]]},
        root=m2.root)
    with pytest.raises(UnlabeledManifest):
        accuracy_under_compression(unsplit, None, [], frames=frames2)


def test_accuracy_outputs(tmp_path, labelled):
    m, frames = labelled
    pts = []
    for clf in Classifier:
        pts += accuracy_under_compression(m, LossyCodec(), ["0", "1"], clf, frames=frames)
    write_accuracy_csv(pts, tmp_path / "accuracy.csv")
    rows = list(csv.DictReader(open(tmp_path / "accuracy.csv")))
    assert list(rows[0]) == ["codec", "quality", "bpp", "classifier", "top1"]
    assert len(rows) == 6 and {r["classifier"] for r in rows} == {"knn", "linear"}
    assert rows[0]["bpp"] == "24.000000" and rows[0]["codec"] == "none"
    write_accuracy_svg(pts, tmp_path / "acc.svg")
    svg = (tmp_path / "acc.svg").read_text()
    assert svg.startswith("<svg") and svg.count("<polyline") == 2


def test_accuracy_point_range():
    with pytest.raises(ValueError):
        AccuracyPoint(1.0, 1.5, Classifier.KNN)
    assert top1([], []) == 0.0
    assert top1([1, 2, 3, 4], [1, 2, 0, 0]) == 0.5
