"""Homomorphic XOR/AND, key switching, noise refresh and operation accounting."""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from . import lwe
from .lwe import Ciphertext, PublicKey, SecretKey
from .params import ParamProfile


@dataclass(frozen=True, eq=False)
class SwitchingKey:
    """Matrix taking BitDe of a ``from_dim`` ciphertext to a ``to_dim`` one."""

    B: np.ndarray
    from_dim: int
    to_dim: int
    profile: ParamProfile

    def __post_init__(self):
        expected = (self.from_dim * self.profile.beta, self.to_dim)
        if self.B.shape != expected:
            raise ValueError(f"switching key shape {self.B.shape} != {expected}")


@dataclass(frozen=True, eq=False)
class TensorCiphertext:
    """Row-major vectorisation of the outer product of two ciphertexts."""

    v: np.ndarray
    noise_bound: int = 0


@dataclass
class OpCounters:
    adds: int = 0
    mults: int = 0
    keyswitches: int = 0
    refresh_events: int = 0
    pk_consumed: int = 0

    def __add__(self, other: "OpCounters") -> "OpCounters":
        return OpCounters(*(getattr(self, f.name) + getattr(other, f.name)
                            for f in fields(self)))

    def __sub__(self, other: "OpCounters") -> "OpCounters":
        return OpCounters(*(getattr(self, f.name) - getattr(other, f.name)
                            for f in fields(self)))

    def copy(self) -> "OpCounters":
        return OpCounters(**vars(self))

    def report(self) -> str:
        return "".join(f"{f.name}={getattr(self, f.name)}\n" for f in fields(self))


def tensor_secret(s: np.ndarray, q: int) -> np.ndarray:
    """``s (x) s`` in the same row-major order as :func:`tensor`."""
    s = np.asarray(s, dtype=np.int64)
    return np.outer(s, s).reshape(-1) % q


def switch_kgen(s1: np.ndarray, s2: SecretKey, p: ParamProfile,
                rng: np.random.Generator) -> SwitchingKey:
    """Public matrix over ``s2`` with Powersof(s1) added to its first column."""
    n1 = len(s1)
    B = lwe.public_matrix(s2.s, n1 * p.beta, p, rng)
    col = B[:, 0].astype(np.int64) + lwe.powersof(s1, p.q, p.beta)
    B[:, 0] = col % p.q
    return SwitchingKey(B, n1, s2.n, p)


def key_switch(long_ct, key: SwitchingKey,
               counters: OpCounters | None = None) -> Ciphertext:
    """Return ``BitDe(long_ct)^T B`` (mod q)."""
    if isinstance(long_ct, (Ciphertext, TensorCiphertext)):
        vec = long_ct.c if isinstance(long_ct, Ciphertext) else long_ct.v
        bound = long_ct.noise_bound
    else:
        vec, bound = np.asarray(long_ct), 0
    if len(vec) != key.from_dim:
        raise ValueError(f"ciphertext length {len(vec)} != key input {key.from_dim}")
    p = key.profile
    bits = lwe.bit_decompose(vec, p.beta).reshape(-1).astype(bool)
    out = key.B[bits].sum(axis=0, dtype=np.int64) % p.q
    if counters is not None:
        counters.keyswitches += 1
        counters.pk_consumed += 1
    switch_noise = 2 * len(bits) * lwe.noise_cap(p.sigma)
    return Ciphertext(out, bound + switch_noise)


def tensor(c1: Ciphertext, c2: Ciphertext, q: int) -> TensorCiphertext:
    if len(c1) != len(c2):
        raise ValueError(f"length mismatch: {len(c1)} vs {len(c2)}")
    r1, r2 = c1.noise_bound, c2.noise_bound
    v = np.outer(c1.c, c2.c).reshape(-1) % q
    return TensorCiphertext(v, r1 + r2 + r1 * r2)


class TrustedRefresher:
    """Simulated bootstrapping: decrypt, then re-encrypt under the public key.

    Holds the secret key, so it is for simulation and tests only; real
    bootstrapping is delegated to an external implementation.
    """

    def __init__(self, sk: SecretKey, pk: PublicKey, rng: np.random.Generator):
        self._sk = sk
        self._pk = pk
        self._rng = rng

    def refresh(self, ct: Ciphertext) -> Ciphertext:
        return lwe.enc(self._pk, lwe.dec(self._sk, ct), self._rng)


class NoopRefresher:
    """Counts refresh events but leaves ciphertexts untouched."""

    def refresh(self, ct: Ciphertext) -> Ciphertext:
        return ct


@dataclass(eq=False)
class EvalContext:
    """Evaluation state for one stream of homomorphic work.

    Single writer. ``counters`` from independent contexts can be summed.
    """

    profile: ParamProfile
    pk: PublicKey
    tensor_key: SwitchingKey | None = None
    lsb_key: SwitchingKey | None = None
    refresher: object | None = None
    rng: np.random.Generator = field(default_factory=np.random.default_rng)
    counters: OpCounters = field(default_factory=OpCounters)
    mults_since_refresh: int = 0
    adds_since_refresh: int = 0

    def encrypt(self, m: int) -> Ciphertext:
        return lwe.enc(self.pk, m, self.rng)

    @property
    def refresh_due(self) -> bool:
        p = self.profile
        return (self.mults_since_refresh >= p.refresh_mult_interval
                or self.adds_since_refresh >= p.refresh_add_interval)

    def refresh_event(self, cts: list[Ciphertext]) -> list[Ciphertext]:
        """One refresh event over the caller's live ciphertexts."""
        if self.refresher is None:
            raise RuntimeError("no noise refresher installed in this context")
        batch = getattr(self.refresher, "refresh_many", None)
        out = batch(cts) if batch else [self.refresher.refresh(c) for c in cts]
        self.counters.refresh_events += 1
        self.counters.pk_consumed += 1
        self.mults_since_refresh = 0
        self.adds_since_refresh = 0
        return out

    def refresh_if_due(self, cts: list[Ciphertext]) -> list[Ciphertext] | None:
        if not self.refresh_due:
            return None
        return self.refresh_event(cts)


def hadd(c1: Ciphertext, c2: Ciphertext, ctx: EvalContext) -> Ciphertext:
    """XOR of the plaintexts."""
    if len(c1) != len(c2):
        raise ValueError(f"length mismatch: {len(c1)} vs {len(c2)}")
    ctx.counters.adds += 1
    ctx.adds_since_refresh += 1
    return Ciphertext((c1.c + c2.c) % ctx.profile.q,
                      c1.noise_bound + c2.noise_bound)


def hmul(c1: Ciphertext, c2: Ciphertext, ctx: EvalContext) -> Ciphertext:
    """AND of the plaintexts: tensor product followed by a key switch to s."""
    if ctx.tensor_key is None:
        raise RuntimeError("context has no s(x)s -> s switching key")
    t = tensor(c1, c2, ctx.profile.q)
    ctx.counters.mults += 1
    ctx.mults_since_refresh += 1
    return key_switch(t, ctx.tensor_key, ctx.counters)


def hnot(c: Ciphertext, ctx: EvalContext) -> Ciphertext:
    """Complement, as an addition with a fresh encryption of 1."""
    return hadd(c, ctx.encrypt(1), ctx)


def refresh(c: Ciphertext, ctx: EvalContext) -> Ciphertext:
    return ctx.refresh_event([c])[0]


@dataclass
class KeySet:
    """Everything ``keygen`` produces."""

    sk: SecretKey
    pk: PublicKey
    tensor_key: SwitchingKey | None
    lsb_key: SwitchingKey

    @property
    def profile(self) -> ParamProfile:
        return self.pk.profile


def generate_keys(p: ParamProfile, rng: np.random.Generator,
                  with_tensor: bool = True) -> KeySet:
    sk = lwe.skgen(p, rng)
    pk = lwe.pkgen(p, sk, rng)
    tkey = None
    if with_tensor:
        tkey = switch_kgen(tensor_secret(sk.s, p.q), sk, p, rng)
    lkey = switch_kgen(sk.s, sk, p, rng)
    return KeySet(sk, pk, tkey, lkey)


def client_context(keys: KeySet, rng: np.random.Generator) -> EvalContext:
    """Context with the simulated (secret-key) refresher installed."""
    return EvalContext(keys.profile, keys.pk, keys.tensor_key, keys.lsb_key,
                       TrustedRefresher(keys.sk, keys.pk, rng), rng)


def server_context(pk: PublicKey, tensor_key: SwitchingKey | None,
                   lsb_key: SwitchingKey | None, rng: np.random.Generator,
                   refresher=None) -> EvalContext:
    """Context built from public material only.

    ``refresher`` is the external bootstrapping service. Without one, refresh
    events are counted but do nothing, which only suits shallow work: the
    integer phase of a bit ciphertext grows through every XOR and AND, and a
    full Add* or Sub* already exceeds q/2 on the toy profile.
    """
    return EvalContext(pk.profile, pk, tensor_key, lsb_key,
                       refresher if refresher is not None else NoopRefresher(), rng)
