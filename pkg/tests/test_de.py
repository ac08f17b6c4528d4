import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fheede import de


def textbook_embed(x, y, b):
    """Textbook DE on an oriented pair, written out independently."""
    h = x - y
    l = math.floor((x + y) / 2)
    h2 = 2 * h + b
    return l + math.floor((h2 + 1) / 2), l - math.floor(h2 / 2)


def available_slow(x, y, h_fid):
    h, l = abs(x - y), (x + y) // 2
    for b in (0, 1):
        x2, y2 = textbook_embed(max(x, y), min(x, y), b)
        if not (0 <= x2 <= 255 and 0 <= y2 <= 255):
            return False
    return h <= h_fid


@pytest.mark.parametrize("pair,hl", [((7, 5), (2, 6)), ((0, 0), (0, 0)), ((255, 255), (0, 255))])
def test_diff_avg(pair, hl):
    assert de.diff_avg(*pair) == hl


@pytest.mark.parametrize("hl,pair", [((0, 9), (9, 9)), ((5, 6), (9, 4)), ((2, 6), (7, 5))])
def test_inv_diff_avg(hl, pair):
    assert de.inv_diff_avg(*hl) == pair


def test_inv_diff_avg_out_of_range():
    with pytest.raises(ValueError):
        de.inv_diff_avg(255, 200)


def test_availability_examples():
    assert de.is_available(7, 5, 10)
    assert not de.is_available(255, 0, 127)
    assert de.is_available(128, 128, 0)
    assert de.is_available(0, 0, 0)


def test_availability_matches_overflow_check_exhaustively():
    # the closed-form bound is exactly "both bits embed without overflow"
    for x in range(256):
        for y in range(x + 1):
            assert de.is_available(x, y, 127) == available_slow(x, y, 127), (x, y)


def test_embed_examples():
    assert de.de_embed(7, 5, 1) == (9, 4)
    assert de.de_embed(40, 40, 0) == (40, 40)
    assert de.de_extract(9, 4) == 1
    assert de.de_extract(40, 40) == 0
    assert de.de_recover(9, 4) == (7, 5)
    assert de.de_recover(40, 40) == (40, 40)
    with pytest.raises(ValueError):
        de.de_embed(5, 7, 1)
    with pytest.raises(ValueError):
        de.de_embed(255, 0, 0)


def test_average_preserved_and_roundtrip_exhaustive():
    for x in range(256):
        for y in range(x + 1):
            if not de.is_available(x, y):
                continue
            for b in (0, 1):
                x2, y2 = de.de_embed(x, y, b)
                assert (x2, y2) == textbook_embed(x, y, b)
                assert (x2 + y2) // 2 == (x + y) // 2
                assert de.de_extract(x2, y2) == b
                assert de.de_recover(x2, y2) == (x, y)


def test_pair_pixels():
    assert [tuple(p[:2]) for p in de.pair_pixels(np.array([[1, 2], [3, 4]]))] == [(1, 2), (3, 4)]
    assert len(de.pair_pixels(np.zeros((512, 512)))) == 131072
    pairs = de.pair_pixels(np.arange(6).reshape(2, 3))
    assert [(p.row, p.col) for p in pairs] == [(0, 0), (1, 0)]


def test_build_map_constant_and_checkerboard():
    m = de.build_map(np.full((4, 6), 77, dtype=np.uint8), 0)
    assert m[:, 0::2].all() and not m[:, 1::2].any()
    zeros = de.build_map(np.zeros((2, 4), dtype=np.uint8), 0)
    assert zeros.sum() == 4
    board = np.tile([255, 0], (4, 3)).astype(np.uint8)
    assert de.build_map(board, 127).sum() == 0


def test_build_map_marks_larger_pixel():
    img = np.array([[3, 9, 9, 3, 5, 5]], dtype=np.uint8)
    assert de.build_map(img, 10).tolist() == [[0, 1, 1, 0, 1, 0]]


def test_build_map_target_ec_picks_smallest_differences():
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, (16, 16)).astype(np.uint8)
    m = de.build_map(img, 127, target_ec=5)
    assert m.sum() == 5
    h = np.abs(img[:, 0::2].astype(int) - img[:, 1::2])
    ok = de.availability(img, 127)
    chosen = sorted(h[r, c // 2] for r, c, _ in de.marked_pairs(m))
    assert chosen == sorted(h[ok])[:5]
    with pytest.raises(ValueError):
        de.build_map(img, 127, target_ec=int(ok.sum()) + 1)
    with pytest.raises(ValueError):
        de.build_map(img, 128)


def test_map_one_bit_per_pair(lena):
    m = de.build_map(lena, 10)
    assert not (m[:, 0::2] & m[:, 1::2]).any()
    assert m.sum() == de.availability(lena, 10).sum()


def test_recovery_on_random_image_is_exact():
    rng = np.random.default_rng(1)
    img = rng.integers(0, 256, (64, 64)).astype(np.uint8)
    mask = de.build_map(img, 127)
    bits = rng.integers(0, 2, int(mask.sum()))
    marked = de.embed_plain(img, mask, bits)
    assert np.array_equal(de.extract_plain(marked, mask), bits)
    assert de.psnr(img, de.recover_plain(marked, mask)) == math.inf


def test_partial_payload_leaves_rest_untouched():
    rng = np.random.default_rng(2)
    img = rng.integers(60, 200, (8, 8)).astype(np.uint8)
    mask = de.build_map(img, 127)
    marked = de.embed_plain(img, mask, [1, 0, 1])
    pairs = de.marked_pairs(mask)
    changed = {(r, c) for r, c in zip(*np.nonzero(marked != img))}
    assert all((r, c - c % 2) in {(p[0], p[1]) for p in pairs[:3]} for r, c in changed)
    assert np.array_equal(de.recover_plain(marked, mask, 3), img)
    assert de.extract_plain(marked, mask, 3).tolist() == [1, 0, 1]


def test_image_embed_matches_pairwise():
    rng = np.random.default_rng(3)
    img = rng.integers(0, 256, (8, 16)).astype(np.uint8)
    mask = de.build_map(img, 127)
    bits = rng.integers(0, 2, int(mask.sum()))
    marked = de.embed_plain(img, mask, bits)
    for (r, c, lbig), b in zip(de.marked_pairs(mask), bits):
        a, z = int(img[r, c]), int(img[r, c + 1])
        x, y = (a, z) if lbig else (z, a)
        x2, y2 = textbook_embed(x, y, b)
        assert (marked[r, c], marked[r, c + 1]) == ((x2, y2) if lbig else (y2, x2))


def test_psnr():
    img = np.zeros((512, 512), dtype=np.uint8)
    other = img.copy()
    other[3, 4] = 255
    assert de.psnr(img, img) == math.inf
    expected = 10 * math.log10(255 ** 2 * 512 * 512 / 255 ** 2)
    assert de.psnr(img, other) == pytest.approx(expected)
    assert de.psnr(img, other) == pytest.approx(54.19, abs=0.01)
    assert de.psnr(other, img) == de.psnr(img, other)
    with pytest.raises(ValueError):
        de.psnr(img, img[:4])


def test_map_compression_edge_cases():
    for m in (np.zeros((0, 0), np.uint8), np.zeros((3, 5), np.uint8),
              np.ones((2, 2), np.uint8)):
        assert np.array_equal(de.decompress_map(de.compress_map(m)), m)
    left = np.zeros((4, 8), np.uint8)
    left[:, 0::2] = 1
    assert np.array_equal(de.decompress_map(de.compress_map(left)), left)
    assert len(de.compress_map(np.zeros((3, 5), np.uint8))) == 17


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 40), st.integers(1, 40), st.integers(0, 2 ** 32 - 1))
def test_map_compression_roundtrip(h, w, seed):
    m = (np.random.default_rng(seed).random((h, w)) < 0.3).astype(np.uint8)
    assert np.array_equal(de.decompress_map(de.compress_map(m)), m)


def test_map_decoding_errors():
    good = de.compress_map(np.eye(4, dtype=np.uint8))
    with pytest.raises(de.MapFormatError, match="offset 0"):
        de.decompress_map(b"XXXXXXXX" + good[8:])
    with pytest.raises(de.MapFormatError, match="offset"):
        de.decompress_map(good[:-1])
    with pytest.raises(de.MapFormatError, match="overflows"):
        de.decompress_map(good + b"\x05")
    with pytest.raises(de.MapFormatError, match="unterminated"):
        de.decompress_map(good[:16] + b"\x80")


def test_lena_trend(lena):
    rows = [de.analyze(lena, h) for h in (0, 1, 2, 3, 5, 10)]
    ecs = [r["ec"] for r in rows]
    psnrs = [r["psnr1"] for r in rows]
    assert ecs == sorted(ecs) and len(set(ecs)) == 6
    assert psnrs == sorted(psnrs, reverse=True)
    assert psnrs[0] >= 60
    assert all(r["psnr2"] == math.inf and r["extracted_ok"] for r in rows)


def test_lena_capacity_against_slow_count(lena):
    img = lena.astype(int)
    slow = sum(available_slow(int(img[r, c]), int(img[r, c + 1]), 10)
               for r in range(0, 512, 8) for c in range(0, 512, 2))
    fast = de.availability(lena[::8], 10).sum()
    assert fast == slow
