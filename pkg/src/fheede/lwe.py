"""LWE bit encryption with even noise, plus BitDe / Powersof helpers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .params import ParamProfile


def storage_dtype(q: int):
    """Smallest unsigned dtype holding residues mod q."""
    if q <= 1 << 16:
        return np.uint16
    if q <= 1 << 32:
        return np.uint32
    return np.uint64


def noise_cap(sigma: float) -> int:
    """Per-sample bound on |e| used by the static noise bookkeeping (8 sigma)."""
    return max(1, math.ceil(8 * sigma))


def centered(v, q: int):
    """Representative of ``v`` mod q in (-q/2, q/2]."""
    v = np.asarray(v, dtype=np.int64) % q
    return np.where(v > q // 2, v - q, v)


def sample_chi(sigma: float, q: int, rng: np.random.Generator, size=None):
    """Rounded Gaussian with standard deviation ``sigma``, reduced mod q."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    x = np.rint(rng.normal(0.0, sigma, size=size)).astype(np.int64)
    return x % q


@dataclass(frozen=True, eq=False)
class SecretKey:
    s: np.ndarray
    profile: ParamProfile

    @property
    def n(self) -> int:
        return len(self.s)


@dataclass(frozen=True, eq=False)
class PublicKey:
    """``A = (b, -W)`` with ``A @ s = 2e (mod q)``."""

    A: np.ndarray
    profile: ParamProfile

    @property
    def rows(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True, eq=False)
class Ciphertext:
    c: np.ndarray
    noise_bound: int = field(default=0, compare=False)

    def __len__(self):
        return len(self.c)


def skgen(p: ParamProfile, rng: np.random.Generator) -> SecretKey:
    s = np.empty(p.n, dtype=np.int64)
    s[0] = 1
    s[1:] = sample_chi(p.key_sigma, p.q, rng, size=p.n - 1)
    return SecretKey(s, p)


def public_matrix(s: np.ndarray, rows: int, p: ParamProfile,
                  rng: np.random.Generator, chunk: int = 1 << 16) -> np.ndarray:
    """PKGen over an arbitrary key vector ``s`` with ``s[0] == 1``.

    Rows are produced in chunks so that very tall matrices (tensor switching
    keys) are never materialised in int64.
    """
    q = p.q
    n2 = len(s)
    t = np.asarray(s[1:], dtype=np.int64)
    A = np.empty((rows, n2), dtype=storage_dtype(q))
    for start in range(0, rows, chunk):
        stop = min(rows, start + chunk)
        W = rng.integers(0, q, size=(stop - start, n2 - 1), dtype=np.int64)
        e = sample_chi(p.sigma, q, rng, size=stop - start)
        b = (W @ t + 2 * e) % q
        A[start:stop, 0] = b
        A[start:stop, 1:] = (-W) % q
    return A


def pkgen(p: ParamProfile, sk: SecretKey, rng: np.random.Generator) -> PublicKey:
    return PublicKey(public_matrix(sk.s, p.d, p, rng), p)


def fresh_noise_bound(p: ParamProfile) -> int:
    # |2 a_r^T e| with a_r binary and |e_i| <= 8 sigma
    return 2 * p.d * noise_cap(p.sigma)


def enc(pk: PublicKey, m: int, rng: np.random.Generator,
        a_r: np.ndarray | None = None) -> Ciphertext:
    """Encrypt one bit as ``(m, 0, ..., 0) + A^T a_r``."""
    if m not in (0, 1):
        raise ValueError(f"plaintext must be a bit, got {m!r}")
    p = pk.profile
    if a_r is None:
        a_r = rng.integers(0, 2, size=pk.rows, dtype=np.uint8)
    c = pk.A[np.asarray(a_r, dtype=bool)].sum(axis=0, dtype=np.int64)
    c[0] += m
    return Ciphertext(c % p.q, fresh_noise_bound(p))


def enc_many(pk: PublicKey, bits, rng: np.random.Generator) -> list[Ciphertext]:
    return [enc(pk, int(b), rng) for b in bits]


def phase(sk: SecretKey, ct: Ciphertext) -> int:
    """Centered value of <c, s> mod q."""
    q = sk.profile.q
    if len(ct.c) != sk.n:
        raise ValueError(f"ciphertext length {len(ct.c)} != key length {sk.n}")
    v = int(np.dot(ct.c, sk.s) % q)
    return v - q if v > q // 2 else v


def dec(sk: SecretKey, ct: Ciphertext) -> int:
    return phase(sk, ct) % 2


def noise_of(sk: SecretKey, ct: Ciphertext, m: int) -> int:
    """Exact |centered(<c, s>) - m|. Needs the secret key: tests only."""
    return abs(phase(sk, ct) - m)


def bit_decompose(x, beta: int) -> np.ndarray:
    """Rows ``u_0 .. u_{beta-1}`` with ``x = sum_j 2^j u_j``; shape (beta, N)."""
    x = np.asarray(x, dtype=np.int64)
    shifts = np.arange(beta, dtype=np.int64)[:, None]
    return ((x[None, :] >> shifts) & 1).astype(np.uint8)


def recompose(u: np.ndarray, q: int) -> np.ndarray:
    beta = u.shape[0]
    weights = (1 << np.arange(beta, dtype=np.int64))[:, None]
    return (u.astype(np.int64) * weights).sum(axis=0) % q


def powersof(x, q: int, beta: int) -> np.ndarray:
    """Concatenation of ``2^j x mod q`` for j = 0 .. beta-1 (length N*beta)."""
    x = np.asarray(x, dtype=np.int64) % q
    out = np.empty((beta, len(x)), dtype=np.int64)
    out[0] = x
    for j in range(1, beta):
        out[j] = (out[j - 1] * 2) % q
    return out.reshape(-1)
