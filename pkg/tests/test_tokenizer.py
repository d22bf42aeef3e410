import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from taco.data import DATASET_SHAPES, ForceImageMapping, SensorKind, TactileFrame
from taco.errors import LengthGeometryMismatch
from taco.tokenizer import (
    PATCH_SYMBOLS,
    ChannelOrder,
    PatchGeometry,
    TokenStream,
    detokenize,
    tokenize,
)


def _oracle_tokens(px: np.ndarray) -> list:
    """Straight loops over the definition: patches row-major, pixels raster, channels."""
    h, w, _ = px.shape
    rows, cols = -(-h // 16), -(-w // 16)
    out = []
    for pr in range(rows):
        for pc in range(cols):
            for r in range(16):
                for c in range(16):
                    y, x = pr * 16 + r, pc * 16 + c
                    for ch in range(3):
                        out.append(int(px[y, x, ch]) if y < h and x < w else 0)
    return out


def test_single_patch():
    px = np.random.default_rng(0).integers(0, 256, (16, 16, 3), dtype=np.uint8)
    t = tokenize(TactileFrame(px))
    assert len(t) == 768 == PATCH_SYMBOLS
    assert t.geometry.num_patches == 1


def test_first_pixel_sub_pixels():
    px = np.zeros((16, 16, 3), np.uint8)
    px[0, 0] = (10, 20, 30)
    px[0, 1] = (40, 50, 60)
    t = tokenize(TactileFrame(px))
    assert t.symbols[:6].tolist() == [10, 20, 30, 40, 50, 60]


def test_48_by_32_grid():
    t = tokenize(TactileFrame(np.zeros((32, 48, 3), np.uint8)))
    g = t.geometry
    assert (g.grid_cols, g.grid_rows) == (3, 2)
    assert len(t) == 4608


def test_symbol_index_formula(rng):
    px = rng.integers(0, 256, (16, 16, 3), dtype=np.uint8)
    s = tokenize(TactileFrame(px)).symbols
    for row, col, ch in [(0, 0, 0), (3, 7, 2), (15, 15, 1), (9, 0, 0)]:
        assert s[3 * (row * 16 + col) + ch] == px[row, col, ch]


@given(st.integers(1, 50), st.integers(1, 50), st.integers(0, 2**32 - 1))
def test_matches_loop_oracle(h, w, seed):
    px = np.random.default_rng(seed).integers(0, 256, (h, w, 3), dtype=np.uint8)
    assert tokenize(TactileFrame(px)).symbols.tolist() == _oracle_tokens(px)


def test_zero_stream_detokenizes_black():
    t = TokenStream(np.zeros(768, np.uint8), PatchGeometry(16, 16))
    f = detokenize(t)
    assert f.pixels.shape == (16, 16, 3) and not f.pixels.any()


def test_length_mismatch():
    with pytest.raises(LengthGeometryMismatch):
        detokenize(TokenStream(np.zeros(767, np.uint8), PatchGeometry(16, 16)))
    with pytest.raises(LengthGeometryMismatch):
        detokenize(TokenStream(np.zeros(768, np.uint8), PatchGeometry(17, 16)))


@pytest.mark.parametrize("shape", sorted(set(DATASET_SHAPES.values())))
def test_bijection_dataset_shapes(shape):
    rng = np.random.default_rng(shape[0] * 7 + shape[1])
    for _ in range(5):
        f = TactileFrame(rng.integers(0, 256, shape + (3,), dtype=np.uint8))
        assert detokenize(tokenize(f)) == f


def test_random_240x320_round_trips():
    rng = np.random.default_rng(7)
    for _ in range(100):
        f = TactileFrame(rng.integers(0, 256, (240, 320, 3), dtype=np.uint8))
        assert np.array_equal(detokenize(tokenize(f)).pixels, f.pixels)


@given(st.integers(1, 40), st.integers(1, 40))
def test_padding_symbols_zero_and_patches_contiguous(h, w):
    f = TactileFrame(np.full((h, w, 3), 255, np.uint8))
    t = tokenize(f)
    g = t.geometry
    assert len(t) == g.grid_rows * g.grid_cols * 768
    # a frame of 255s: the number of non-zero symbols is exactly the real samples
    assert int(np.count_nonzero(t.symbols)) == h * w * 3
    for k in range(g.num_patches):
        pr, pc = divmod(k, g.grid_cols)
        block = np.zeros((16, 16, 3), np.uint8)
        sub = f.pixels[pr * 16:(pr + 1) * 16, pc * 16:(pc + 1) * 16]
        block[:sub.shape[0], :sub.shape[1]] = sub
        assert np.array_equal(t.patch(k), block.reshape(-1))


def test_channel_order_follows_sensor_kind():
    m = ForceImageMapping()
    force = TactileFrame(np.zeros((5, 12, 3), np.uint8), SensorKind.FORCE, m)
    t = tokenize(force)
    assert t.channel_order is ChannelOrder.XYZ
    assert t.geometry.num_patches == 1
    back = detokenize(t, m)
    assert back == force
    assert tokenize(TactileFrame(np.zeros((5, 12, 3), np.uint8))).channel_order is ChannelOrder.RGB
