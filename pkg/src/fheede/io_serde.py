"""Binary file formats: PGM images, keys, switching keys, ciphertext stores, bit files, maps.

Every crypto file starts with an 8-byte magic, a little-endian u16 format
version and the profile block; residues are little-endian unsigned integers
of ``ceil(beta / 8)`` bytes.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from . import de
from .circuits import WIDTH, EncryptedByte
from .homomorphic import SwitchingKey
from .lwe import Ciphertext, PublicKey, SecretKey, storage_dtype
from .params import ParamProfile
from .pipeline import MODES, CiphertextStore

VERSION = 1

MAGIC_SK = b"FHEDSK01"
MAGIC_PK = b"FHEDPK01"
MAGIC_SW = b"FHEDSW01"
MAGIC_CT = b"FHEDCT01"
MAGIC_PAY = b"FHEDPAY1"
MAGIC_MAP = de.MAP_MAGIC

KIND_STORE = 0
KIND_BITS = 1

_PROFILE = struct.Struct("<IIIHdddII")
_HEADER_SIZE = 8 + 2 + _PROFILE.size


class FormatError(ValueError):
    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)


class ProfileMismatch(FormatError):
    pass


class RoleViolation(PermissionError):
    """Secret-key material offered to a server-side reader."""


# --- PGM -------------------------------------------------------------------

def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:2] != b"P5":
        raise FormatError("not a binary PGM (expected P5)", 0)
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise FormatError("truncated PGM header", pos)
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and data[pos:pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise FormatError("malformed PGM header field", start)
        fields.append(int(data[start:pos]))
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise FormatError("missing whitespace after PGM header", pos)
    pos += 1
    width, height, maxval = fields
    if maxval != 255:
        raise FormatError(f"only 8-bit PGM is supported, maxval={maxval}", pos - 1)
    need = width * height
    if len(data) - pos < need:
        raise FormatError(f"truncated pixel data: need {need} bytes", len(data))
    return np.frombuffer(data, dtype=np.uint8, count=need, offset=pos).reshape(height, width).copy()


def write_pgm(img: np.ndarray, path):
    img = np.asarray(img)
    if img.ndim != 2 or img.min(initial=0) < 0 or img.max(initial=0) > 255:
        raise ValueError("expected a 2-D 8-bit grayscale image")
    h, w = img.shape
    Path(path).write_bytes(b"P5\n%d %d\n255\n" % (w, h) + img.astype(np.uint8).tobytes())


# --- shared pieces ---------------------------------------------------------

def _header(magic: bytes, p: ParamProfile) -> bytes:
    return magic + struct.pack("<H", VERSION) + _PROFILE.pack(
        p.n, p.q, p.d, p.beta, p.epsilon, p.sigma, p.key_sigma,
        p.refresh_mult_interval, p.refresh_add_interval)


def peek_magic(path) -> bytes:
    with open(path, "rb") as f:
        return f.read(8)


def _check_magic(data: bytes, magic: bytes, server_side: bool = False):
    got = data[:8]
    if got == MAGIC_SK and magic != MAGIC_SK and server_side:
        raise RoleViolation("secret-key file offered to a server-side command")
    if got != magic:
        raise FormatError(f"expected magic {magic!r}, found {got!r}", 0)


def _read_header(data: bytes, magic: bytes, expect: ParamProfile | None,
                 server_side: bool = False) -> ParamProfile:
    _check_magic(data, magic, server_side)
    if len(data) < _HEADER_SIZE:
        raise FormatError("truncated header", len(data))
    (version,) = struct.unpack_from("<H", data, 8)
    if version != VERSION:
        raise FormatError(f"unsupported format version {version}", 8)
    n, q, d, beta, eps, sigma, key_sigma, rmi, rai = _PROFILE.unpack_from(data, 10)
    p = ParamProfile(n=n, q=q, d=d, epsilon=eps, sigma=sigma, key_sigma=key_sigma,
                     refresh_mult_interval=rmi, refresh_add_interval=rai, beta=beta)
    if expect is not None and p != expect:
        raise ProfileMismatch(f"file profile {p} does not match expected {expect}", 10)
    return p


def _encode(values, p: ParamProfile) -> bytes:
    width = p.residue_bytes
    arr = np.asarray(values, dtype=np.int64).reshape(-1)
    if width in (1, 2):
        return arr.astype("<u%d" % width).tobytes()
    return b"".join(int(v).to_bytes(width, "little") for v in arr)


def _decode(data: bytes, offset: int, count: int, p: ParamProfile) -> tuple[np.ndarray, int]:
    width = p.residue_bytes
    end = offset + count * width
    if end > len(data):
        raise FormatError(f"truncated residue block: need {count * width} bytes", len(data))
    chunk = data[offset:end]
    if width in (1, 2):
        arr = np.frombuffer(chunk, dtype="<u%d" % width).astype(np.int64)
    else:
        arr = np.array([int.from_bytes(chunk[i:i + width], "little")
                        for i in range(0, len(chunk), width)], dtype=np.int64)
    if count and arr.max() >= p.q:
        bad = int(np.argmax(arr >= p.q))
        raise FormatError("residue out of range", offset + bad * width)
    return arr, end


def _u32(data: bytes, offset: int, what: str) -> tuple[int, int]:
    if offset + 4 > len(data):
        raise FormatError(f"truncated {what}", len(data))
    return struct.unpack_from("<I", data, offset)[0], offset + 4


def _expect_end(data: bytes, offset: int):
    if offset != len(data):
        raise FormatError(f"{len(data) - offset} trailing bytes", offset)


# --- keys ------------------------------------------------------------------

def dump_secret_key(sk: SecretKey) -> bytes:
    return _header(MAGIC_SK, sk.profile) + _encode(sk.s, sk.profile)


def load_secret_key(data: bytes, expect: ParamProfile | None = None) -> SecretKey:
    p = _read_header(data, MAGIC_SK, expect)
    s, end = _decode(data, _HEADER_SIZE, p.n, p)
    _expect_end(data, end)
    return SecretKey(s, p)


def dump_public_key(pk: PublicKey) -> bytes:
    rows, cols = pk.A.shape
    return (_header(MAGIC_PK, pk.profile) + struct.pack("<II", rows, cols)
            + _encode(pk.A, pk.profile))


def load_public_key(data: bytes, expect: ParamProfile | None = None,
                    server_side: bool = False) -> PublicKey:
    p = _read_header(data, MAGIC_PK, expect, server_side)
    rows, off = _u32(data, _HEADER_SIZE, "row count")
    cols, off = _u32(data, off, "column count")
    if cols != p.n:
        raise FormatError(f"public key has {cols} columns, profile n={p.n}", off - 4)
    A, end = _decode(data, off, rows * cols, p)
    _expect_end(data, end)
    return PublicKey(A.reshape(rows, cols).astype(storage_dtype(p.q)), p)


def dump_switching_key(key: SwitchingKey) -> bytes:
    return (_header(MAGIC_SW, key.profile) + struct.pack("<II", key.from_dim, key.to_dim)
            + _encode(key.B, key.profile))


def load_switching_key(data: bytes, expect: ParamProfile | None = None,
                       server_side: bool = False) -> SwitchingKey:
    p = _read_header(data, MAGIC_SW, expect, server_side)
    from_dim, off = _u32(data, _HEADER_SIZE, "input dimension")
    to_dim, off = _u32(data, off, "output dimension")
    B, end = _decode(data, off, from_dim * p.beta * to_dim, p)
    _expect_end(data, end)
    return SwitchingKey(B.reshape(from_dim * p.beta, to_dim).astype(storage_dtype(p.q)),
                        from_dim, to_dim, p)


# --- ciphertexts -----------------------------------------------------------

def _dump_cts(cts, p: ParamProfile) -> bytes:
    if not cts:
        return b""
    vecs = np.stack([c.c for c in cts])
    # noise bounds past q - 1 all mean "exhausted"; clamp to fit a residue
    bounds = [min(c.noise_bound, p.q - 1) for c in cts]
    return _encode(vecs, p) + _encode(bounds, p)


def _load_cts(data: bytes, offset: int, count: int, p: ParamProfile):
    vecs, off = _decode(data, offset, count * p.n, p)
    bounds, off = _decode(data, off, count, p) if count else (np.zeros(0, np.int64), off)
    vecs = vecs.reshape(count, p.n)
    return [Ciphertext(vecs[i].copy(), int(bounds[i])) for i in range(count)], off


def dump_store(store: CiphertextStore) -> bytes:
    p = store.profile
    cmap = de.compress_map(store.mask)
    cts = [c for u, v in store.blocks for c in u.bits + v.bits]
    cts += [c for e in store.extras for c in e.bits]
    head = struct.pack("<BBIIIIII", KIND_STORE, MODES.index(store.mode), store.width,
                       store.height, len(store.blocks), len(store.extras),
                       store.embedded, len(cmap))
    return _header(MAGIC_CT, p) + head + cmap + _dump_cts(cts, p)


def dump_bits_ct(cts: list[Ciphertext], p: ParamProfile) -> bytes:
    return _header(MAGIC_CT, p) + struct.pack("<BI", KIND_BITS, len(cts)) + _dump_cts(cts, p)


def _ct_kind(data: bytes) -> int:
    if len(data) <= _HEADER_SIZE:
        raise FormatError("truncated ciphertext file", len(data))
    return data[_HEADER_SIZE]


def load_store(data: bytes, expect: ParamProfile | None = None,
               server_side: bool = False) -> CiphertextStore:
    p = _read_header(data, MAGIC_CT, expect, server_side)
    if _ct_kind(data) != KIND_STORE:
        raise FormatError("ciphertext file is not an image store", _HEADER_SIZE)
    head = struct.Struct("<BBIIIIII")
    if len(data) < _HEADER_SIZE + head.size:
        raise FormatError("truncated store header", len(data))
    _, mode, width, height, npairs, nextra, embedded, maplen = head.unpack_from(data, _HEADER_SIZE)
    off = _HEADER_SIZE + head.size
    if mode >= len(MODES):
        raise FormatError(f"unknown mode {mode}", _HEADER_SIZE + 1)
    if npairs != (width // 2) * height or nextra != (height if width % 2 else 0):
        raise FormatError("pair count does not match image dimensions", _HEADER_SIZE + 10)
    try:
        mask = de.decompress_map(data[off:off + maplen])
    except de.MapFormatError as exc:
        raise FormatError(f"embedded map: {exc}", off) from exc
    if mask.shape != (height, width):
        raise FormatError("map dimensions differ from store", off)
    off += maplen
    per_pair = 2 * WIDTH
    cts, off = _load_cts(data, off, npairs * per_pair + nextra * WIDTH, p)
    _expect_end(data, off)
    blocks = []
    for i in range(npairs):
        chunk = cts[i * per_pair:(i + 1) * per_pair]
        blocks.append((EncryptedByte(tuple(chunk[:WIDTH])), EncryptedByte(tuple(chunk[WIDTH:]))))
    base = npairs * per_pair
    extras = [EncryptedByte(tuple(cts[base + i * WIDTH: base + (i + 1) * WIDTH]))
              for i in range(nextra)]
    store = CiphertextStore(p, MODES[mode], width, height, mask, blocks, extras, embedded)
    if embedded > len(store.marked_indices()):
        raise FormatError("embedded count exceeds marked pairs", _HEADER_SIZE + 22)
    return store


def load_bits_ct(data: bytes, expect: ParamProfile | None = None,
                 server_side: bool = False) -> tuple[list[Ciphertext], ParamProfile]:
    p = _read_header(data, MAGIC_CT, expect, server_side)
    if _ct_kind(data) != KIND_BITS:
        raise FormatError("ciphertext file is not a bit list", _HEADER_SIZE)
    count, off = _u32(data, _HEADER_SIZE + 1, "bit count")
    cts, off = _load_cts(data, off, count, p)
    _expect_end(data, off)
    return cts, p


# --- plain bit sequences and maps -----------------------------------------

def dump_bits(bits) -> bytes:
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.size and bits.max() > 1:
        raise ValueError("bit sequence contains non-binary values")
    return (MAGIC_PAY + struct.pack("<HI", VERSION, bits.size)
            + np.packbits(bits, bitorder="little").tobytes())


def load_bits(data: bytes) -> np.ndarray:
    _check_magic(data, MAGIC_PAY)
    if len(data) < 14:
        raise FormatError("truncated bit-file header", len(data))
    version, count = struct.unpack_from("<HI", data, 8)
    if version != VERSION:
        raise FormatError(f"unsupported format version {version}", 8)
    need = (count + 7) // 8
    if len(data) != 14 + need:
        raise FormatError(f"bit payload should be {need} bytes", 14)
    return np.unpackbits(np.frombuffer(data, np.uint8, offset=14), bitorder="little",
                         count=count).astype(np.uint8)


def dump_map(mask: np.ndarray) -> bytes:
    return de.compress_map(mask)


def load_map(data: bytes) -> np.ndarray:
    try:
        return de.decompress_map(data)
    except de.MapFormatError as exc:
        raise FormatError(str(exc)) from exc


# --- path wrappers ---------------------------------------------------------

def write_bytes(path, data: bytes):
    Path(path).write_bytes(data)


def read_secret_key(path, expect=None) -> SecretKey:
    return load_secret_key(Path(path).read_bytes(), expect)


def read_public_key(path, expect=None, server_side=False) -> PublicKey:
    return load_public_key(Path(path).read_bytes(), expect, server_side)


def read_switching_key(path, expect=None, server_side=False) -> SwitchingKey:
    return load_switching_key(Path(path).read_bytes(), expect, server_side)


def read_store(path, expect=None, server_side=False) -> CiphertextStore:
    return load_store(Path(path).read_bytes(), expect, server_side)


def read_bits(path) -> np.ndarray:
    return load_bits(Path(path).read_bytes())


def read_map(path) -> np.ndarray:
    return load_map(Path(path).read_bytes())
