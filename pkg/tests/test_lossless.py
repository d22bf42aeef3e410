import gzip

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from taco.container import unpack
from taco.data import ForceImageMapping, SensorKind, TactileFrame
from taco.entropy import ProbabilityModel, encode_symbols
from taco.errors import CorruptHeader, CorruptPayload, EmptyInput, TruncatedBitstream
from taco.lossless import (
    LosslessConfig,
    Predictor,
    bits_per_byte,
    bits_per_byte_of,
    decode_lossless,
    encode_lossless,
    encode_payload,
    ratio_of,
    residuals_and_contexts,
)
from taco.synthetic import gradient_frame, random_frame, tactile_frame

from oracles import adaptive_code_length


def _naive_residuals(px: np.ndarray, cfg: LosslessConfig):
    """Per-sample loops over the frame itself, patch by patch in token order."""
    h, w, _ = px.shape
    res, ctx = [], []
    for py in range(0, h, 16):
        for pxx in range(0, w, 16):
            for r in range(16):
                for c in range(16):
                    y, x = py + r, pxx + c
                    if y >= h or x >= w:
                        continue
                    for ch in range(3):
                        def at(dy, dx):
                            if r + dy < 0 or c + dx < 0:
                                return 0
                            yy, xx = y + dy, x + dx
                            return int(px[yy, xx, ch]) if yy < h and xx < w else 0
                        a, b, d = at(0, -1), at(-1, 0), at(-1, -1)
                        if cfg.predictor is Predictor.ZERO:
                            p = 0
                        elif cfg.predictor is Predictor.LEFT:
                            p = a
                        elif d >= max(a, b):
                            p = min(a, b)
                        elif d <= min(a, b):
                            p = max(a, b)
                        else:
                            p = a + b - d
                        res.append((int(px[y, x, ch]) - p) % 256)
                        ctx.append(min(abs(a - b).bit_length(), cfg.context_buckets - 1))
    return res, ctx


def _ramp(h, w, noise, seed=0):
    x = np.arange(w)[None, :, None] * np.array([0.7, 0.5, 0.3]) + np.array([20, 60, 100])
    img = np.broadcast_to(x, (h, w, 3)) + np.random.default_rng(seed).normal(0, noise, (h, w, 3))
    return TactileFrame(np.clip(np.round(img), 0, 255).astype(np.uint8))


CONFIGS = [LosslessConfig(), LosslessConfig(Predictor.ZERO, 1), LosslessConfig(Predictor.LEFT, 3),
           LosslessConfig(Predictor.MEDIAN_EDGE, 64, 16, 4096)]


# ---------------------------------------------------------------- routes agree

@pytest.mark.parametrize("cfg", CONFIGS)
@pytest.mark.parametrize("shape", [(16, 16), (37, 29), (5, 12), (40, 33)])
def test_vectorised_residuals_match_loops(cfg, shape):
    f = tactile_frame(*shape, np.random.default_rng(shape[0]))
    res, ctx = residuals_and_contexts(f, cfg)
    r2, c2 = _naive_residuals(f.pixels, cfg)
    assert res.tolist() == r2
    assert ctx.tolist() == c2


@pytest.mark.parametrize("cfg", CONFIGS)
def test_kernel_matches_generic_coder(cfg):
    """The fused kernel and the generic context coder emit identical bytes."""
    f = tactile_frame(45, 50, np.random.default_rng(4))
    res, ctx = residuals_and_contexts(f, cfg)
    model = ProbabilityModel(cfg.context_buckets, cfg.increment, cfg.max_total,
                             context_fn=lambda hist: int(ctx[len(hist)]))
    assert encode_symbols(res, model).data == encode_payload(f, cfg)


def test_payload_length_tracks_cross_entropy():
    cfg = LosslessConfig()
    f = tactile_frame(64, 64, np.random.default_rng(5))
    res, ctx = residuals_and_contexts(f, cfg)
    ce = sum(adaptive_code_length(res[ctx == k].tolist(), cfg.increment, cfg.max_total)
             for k in range(cfg.context_buckets))
    bits = 8 * len(encode_payload(f, cfg))
    assert 0 <= bits - ce <= 64


# ---------------------------------------------------------------- round trips

def test_fixtures_round_trip(fixture_frames):
    for name, f in fixture_frames.items():
        for cfg in CONFIGS:
            assert decode_lossless(encode_lossless(f, cfg)) == f, name


@given(st.integers(1, 70), st.integers(1, 70), st.integers(0, 2**32 - 1), st.sampled_from(CONFIGS))
def test_round_trip_property(h, w, seed, cfg):
    rng = np.random.default_rng(seed)
    f = random_frame(h, w, rng) if seed % 2 else tactile_frame(h, w, rng)
    assert decode_lossless(encode_lossless(f, cfg)) == f


def test_extreme_values_round_trip():
    for v in (0, 255):
        f = TactileFrame(np.full((33, 17, 3), v, np.uint8))
        assert decode_lossless(encode_lossless(f)) == f
    checker = (np.indices((32, 32)).sum(0) % 2 * 255).astype(np.uint8)
    f = TactileFrame(np.repeat(checker[..., None], 3, -1))
    assert decode_lossless(encode_lossless(f)) == f


def test_force_metadata_survives():
    m = ForceImageMapping.from_range(4.0)
    f = TactileFrame(np.random.default_rng(0).integers(0, 256, (200, 60, 3), dtype=np.uint8),
                     SensorKind.FORCE, m)
    back = decode_lossless(encode_lossless(f))
    assert back == f
    assert back.sensor_kind is SensorKind.FORCE and back.mapping == m


def test_deterministic():
    f = tactile_frame(120, 160, np.random.default_rng(9))
    assert encode_lossless(f).data == encode_lossless(f).data


# ---------------------------------------------------------------- rates

def test_constant_frame_is_nearly_free():
    f = TactileFrame(np.full((256, 256, 3), (90, 140, 200), np.uint8))
    payload = encode_payload(f, LosslessConfig())
    assert 8 * len(payload) / f.nbytes < 0.1


def test_random_frame_is_incompressible():
    f = random_frame(480, 640, np.random.default_rng(0))
    assert 8.0 <= bits_per_byte_of([f]) <= 8.2


def test_gradient_beats_gzip():
    for f in (_ramp(240, 320, 0.5), gradient_frame(240, 320, np.random.default_rng(1))):
        gz = 8 * len(gzip.compress(f.pixels.tobytes(), 9)) / f.nbytes
        assert bits_per_byte_of([f]) < gz


def test_prediction_and_contexts_help(fixture_frames):
    frames = [f for k, f in fixture_frames.items() if "objtac" not in k]
    best = bits_per_byte_of(frames, LosslessConfig())
    plain = bits_per_byte_of(frames, LosslessConfig(Predictor.ZERO, 1))
    left = bits_per_byte_of(frames, LosslessConfig(Predictor.LEFT, 1))
    assert best < left < plain


def test_bits_per_byte_arithmetic():
    assert bits_per_byte(250 * 8, 1000) == 2.0
    assert ratio_of(2.0) == 4.0
    assert ratio_of(8.0) == 1.0
    with pytest.raises(EmptyInput):
        bits_per_byte(10, 0)
    with pytest.raises(EmptyInput):
        bits_per_byte_of([])


# ---------------------------------------------------------------- damage

def test_header_flip_raises_corrupt_header():
    data = bytearray(encode_lossless(tactile_frame(32, 32, np.random.default_rng(2))).data)
    for i in (5, 6, 7, 9, 12, 20):
        bad = bytearray(data)
        bad[i] ^= 0x10
        with pytest.raises(CorruptHeader):
            decode_lossless(bytes(bad))


def test_payload_damage_and_truncation():
    data = encode_lossless(tactile_frame(32, 32, np.random.default_rng(3))).data
    _, payload = unpack(data)
    bad = bytearray(data)
    bad[len(data) - len(payload) // 2] ^= 1
    with pytest.raises(CorruptPayload):
        decode_lossless(bytes(bad))
    with pytest.raises(TruncatedBitstream):
        decode_lossless(data[:-3])


def test_config_validation():
    with pytest.raises(ValueError):
        LosslessConfig(context_buckets=0)
    with pytest.raises(ValueError):
        LosslessConfig(max_total=1 << 20)
    assert LosslessConfig.from_meta(LosslessConfig().to_meta()) == LosslessConfig()
