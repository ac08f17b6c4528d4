"""Plaintext difference expansion on horizontal pixel pairs.

A pair ``(X, Y)`` is oriented so that ``X`` is the larger pixel (the left one
on ties). The availability map is image shaped and holds a single 1 per usable
pair, on the larger pixel.
"""

from __future__ import annotations

import math
import struct
from typing import NamedTuple

import numpy as np

MAP_MAGIC = b"FHEDMAP1"


class MapFormatError(ValueError):
    pass


class PixelPair(NamedTuple):
    x: int
    y: int
    row: int = 0
    col: int = 0


def diff_avg(x: int, y: int) -> tuple[int, int]:
    return x - y, (x + y) // 2


def inv_diff_avg(h: int, l: int) -> tuple[int, int]:
    x = l + (h + 1) // 2
    y = l - h // 2
    if not (0 <= x <= 255 and 0 <= y <= 255):
        raise ValueError(f"(h={h}, l={l}) reconstructs out of range: ({x}, {y})")
    return x, y


def overflow_bound(l):
    return np.minimum(2 * (255 - np.asarray(l)), 2 * np.asarray(l) + 1)


def is_available(x: int, y: int, h_fid: int | None = None) -> bool:
    """Overflow/underflow constraints for both bit values, plus |h| <= h_fid."""
    h, l = abs(x - y), (x + y) // 2
    bound = int(overflow_bound(l))
    if h > bound or 2 * h + 1 > bound:
        return False
    return h_fid is None or h <= h_fid


def de_embed(x: int, y: int, b: int) -> tuple[int, int]:
    """Embed bit ``b`` into an oriented pair (``x >= y``)."""
    if x < y:
        raise ValueError(f"pair ({x}, {y}) is not oriented larger-first")
    if not is_available(x, y):
        raise ValueError(f"pair ({x}, {y}) cannot carry a bit without overflow")
    h, l = diff_avg(x, y)
    return inv_diff_avg(2 * h + b, l)


def de_extract(x: int, y: int) -> int:
    return (x - y) & 1


def de_recover(x: int, y: int) -> tuple[int, int]:
    hp, l = diff_avg(x, y)
    return inv_diff_avg(hp // 2, l)


def pair_pixels(img: np.ndarray) -> list[PixelPair]:
    """Horizontal pairs (0,1), (2,3), ... in raster order; an odd last column is skipped."""
    img = np.asarray(img)
    rows, cols = img.shape
    return [PixelPair(int(img[r, c]), int(img[r, c + 1]), r, c)
            for r in range(rows) for c in range(0, cols - 1, 2)]


def _pair_views(img: np.ndarray):
    img = np.asarray(img, dtype=np.int64)
    w = img.shape[1] - img.shape[1] % 2
    return img[:, 0:w:2], img[:, 1:w:2]


def availability(img: np.ndarray, h_fid: int | None = None) -> np.ndarray:
    """Boolean (rows, cols // 2) grid of usable pairs."""
    left, right = _pair_views(img)
    h = np.abs(left - right)
    bound = overflow_bound((left + right) // 2)
    ok = (h <= bound) & (2 * h + 1 <= bound)
    if h_fid is not None:
        ok &= h <= h_fid
    return ok


def build_map(img: np.ndarray, h_fid: int, target_ec: int | None = None) -> np.ndarray:
    """Image-shaped uint8 mask with a 1 on the larger pixel of each selected pair.

    With ``target_ec`` only that many pairs are kept, smallest difference
    first and raster order among equal differences.
    """
    if not 0 <= h_fid <= 127:
        raise ValueError(f"h_fid must be in [0, 127], got {h_fid}")
    img = np.asarray(img)
    left, right = _pair_views(img)
    ok = availability(img, h_fid)
    if target_ec is not None:
        count = int(ok.sum())
        if target_ec > count:
            raise ValueError(f"target EC {target_ec} exceeds {count} available pairs")
        h = np.abs(left - right).ravel()
        idx = np.flatnonzero(ok.ravel())
        keep = idx[np.argsort(h[idx], kind="stable")[:target_ec]]
        ok = np.zeros(ok.size, dtype=bool)
        ok[keep] = True
        ok = ok.reshape(left.shape)
    mask = np.zeros(img.shape, dtype=np.uint8)
    left_big = left >= right
    w = left.shape[1] * 2
    mask[:, 0:w:2] = ok & left_big
    mask[:, 1:w:2] = ok & ~left_big
    return mask


def marked_pairs(mask: np.ndarray) -> list[tuple[int, int, bool]]:
    """``(row, left_col, left_is_larger)`` for every marked pair in raster order."""
    mask = np.asarray(mask)
    w = mask.shape[1] - mask.shape[1] % 2
    lm, rm = mask[:, 0:w:2], mask[:, 1:w:2]
    if np.any(lm & rm):
        raise ValueError("map marks both pixels of a pair")
    out = []
    for r, k in zip(*np.nonzero(lm | rm)):
        out.append((int(r), int(2 * k), bool(lm[r, k])))
    return out


def _oriented(img: np.ndarray, mask: np.ndarray):
    img = np.asarray(img, dtype=np.int64)
    pairs = marked_pairs(mask)
    rows = np.array([p[0] for p in pairs], dtype=np.int64)
    cols = np.array([p[1] for p in pairs], dtype=np.int64)
    lbig = np.array([p[2] for p in pairs], dtype=bool)
    bc = np.where(lbig, cols, cols + 1)
    sc = np.where(lbig, cols + 1, cols)
    return rows, bc, sc, img[rows, bc], img[rows, sc]


def embed_plain(img: np.ndarray, mask: np.ndarray, bits) -> np.ndarray:
    """DE-embed ``bits`` into the first ``len(bits)`` marked pairs."""
    bits = np.asarray(bits, dtype=np.int64)
    rows, bc, sc, x, y = _oriented(img, mask)
    if len(bits) > len(rows):
        raise ValueError(f"payload of {len(bits)} bits exceeds capacity {len(rows)}")
    k = len(bits)
    rows, bc, sc, x, y = rows[:k], bc[:k], sc[:k], x[:k], y[:k]
    h, l = x - y, (x + y) // 2
    hp = 2 * h + bits
    out = np.array(img, dtype=np.int64)
    out[rows, bc] = l + (hp + 1) // 2
    out[rows, sc] = l - hp // 2
    if out.min() < 0 or out.max() > 255:
        raise ValueError("embedding overflowed; map does not match the image")
    return out.astype(np.uint8)


def extract_plain(marked: np.ndarray, mask: np.ndarray, count: int | None = None) -> np.ndarray:
    _, _, _, x, y = _oriented(marked, mask)
    if count is not None:
        x, y = x[:count], y[:count]
    return ((x - y) & 1).astype(np.uint8)


def recover_plain(marked: np.ndarray, mask: np.ndarray, count: int | None = None) -> np.ndarray:
    rows, bc, sc, x, y = _oriented(marked, mask)
    if count is not None:
        rows, bc, sc, x, y = rows[:count], bc[:count], sc[:count], x[:count], y[:count]
    hp, l = x - y, (x + y) // 2
    h = hp // 2
    out = np.array(marked, dtype=np.int64)
    out[rows, bc] = l + (h + 1) // 2
    out[rows, sc] = l - h // 2
    return out.astype(np.uint8)


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = np.mean((a - b) ** 2)
    if mse == 0:
        return math.inf
    return 10 * math.log10(255.0 ** 2 / mse)


def _leb128(value: int) -> bytes:
    out = bytearray()
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def compress_map(mask: np.ndarray) -> bytes:
    """Magic, width/height (u32 LE), then alternating LEB128 run lengths from a 0-run."""
    mask = np.asarray(mask)
    height, width = mask.shape
    flat = mask.ravel().astype(bool)
    out = bytearray(MAP_MAGIC + struct.pack("<II", width, height))
    if flat.size:
        change = np.flatnonzero(np.diff(flat.astype(np.int8))) + 1
        bounds = np.concatenate(([0], change, [flat.size]))
        runs = np.diff(bounds).tolist()
        if flat[0]:
            runs.insert(0, 0)
        for r in runs:
            out += _leb128(int(r))
    return bytes(out)


def decompress_map(data: bytes) -> np.ndarray:
    if data[:8] != MAP_MAGIC:
        raise MapFormatError("bad map magic at offset 0")
    if len(data) < 16:
        raise MapFormatError(f"truncated map header at offset {len(data)}")
    width, height = struct.unpack_from("<II", data, 8)
    total = width * height
    flat = np.zeros(total, dtype=np.uint8)
    pos, filled, bit = 16, 0, 0
    while pos < len(data):
        start, value, shift = pos, 0, 0
        while True:
            if pos >= len(data):
                raise MapFormatError(f"unterminated run length at offset {start}")
            byte = data[pos]
            pos += 1
            value |= (byte & 0x7F) << shift
            shift += 7
            if not byte & 0x80:
                break
        if filled + value > total:
            raise MapFormatError(f"run at offset {start} overflows {total} pixels")
        flat[filled:filled + value] = bit
        filled += value
        bit ^= 1
    if filled != total:
        raise MapFormatError(f"runs cover {filled} of {total} pixels at offset {pos}")
    return flat.reshape(height, width)


def analyze(img: np.ndarray, h_fid: int, target_ec: int | None = None,
            rng: np.random.Generator | None = None) -> dict:
    """Plaintext-only EC / PSNR1 / PSNR2 with a uniformly random payload."""
    rng = np.random.default_rng(0) if rng is None else rng
    mask = build_map(img, h_fid, target_ec)
    ec = int(mask.sum())
    bits = rng.integers(0, 2, size=ec, dtype=np.uint8)
    marked = embed_plain(img, mask, bits)
    recovered = recover_plain(marked, mask)
    return {
        "h_fid": h_fid,
        "ec": ec,
        "er": ec / np.asarray(img).size,
        "psnr1": psnr(img, marked),
        "psnr2": psnr(img, recovered),
        "extracted_ok": bool(np.array_equal(extract_plain(marked, mask), bits)),
        "map": mask,
    }
