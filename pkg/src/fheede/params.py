"""Cryptosystem parameter profiles."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path


class ProfileError(ValueError):
    """Raised when a parameter profile violates its constraints."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass(frozen=True)
class ParamProfile:
    """LWE parameters.

    ``sigma`` is the standard deviation of the rounded Gaussian noise in
    modulus units. ``key_sigma`` is the width used for the secret coordinates
    and defaults to ``sigma``. ``beta`` defaults to the bit length of ``q``.
    """

    n: int
    q: int
    d: int
    epsilon: float = 0.2
    sigma: float = 1.0
    refresh_mult_interval: int = 10
    refresh_add_interval: int = 100
    beta: int | None = None
    key_sigma: float | None = None
    name: str = field(default="custom", compare=False)

    def __post_init__(self):
        if self.beta is None:
            object.__setattr__(self, "beta", ceil_log2(self.q))
        if self.key_sigma is None:
            object.__setattr__(self, "key_sigma", self.sigma)

    @property
    def residue_bytes(self) -> int:
        return (self.beta + 7) // 8

    def replace(self, **changes) -> "ParamProfile":
        return dataclasses.replace(self, **changes)


def ceil_log2(x: int) -> int:
    """Exact integer ceil(log2(x)) for x >= 1."""
    return (x - 1).bit_length()


def is_prime(x: int) -> bool:
    if x < 2:
        return False
    if x % 2 == 0:
        return x == 2
    f = 3
    while f * f <= x:
        if x % f == 0:
            return False
        f += 2
    return True


def validate_profile(p: ParamProfile) -> list[str]:
    """Return the list of violated constraints (empty when ``p`` is valid)."""
    problems = []
    if p.n < 1:
        problems.append(f"n must be positive, got {p.n}")
    if p.d < 1:
        problems.append(f"d must be positive, got {p.d}")
    if not is_prime(p.q):
        problems.append(f"q={p.q} is not prime")
    if not p.n * p.n < p.q < 2 * p.n * p.n:
        problems.append(f"q={p.q} outside ({p.n ** 2}, {2 * p.n ** 2})")
    if p.epsilon <= 0:
        problems.append(f"epsilon must be > 0, got {p.epsilon}")
    elif p.q > 1:
        d_min = (1 + p.epsilon) * (1 + p.n) * math.log2(p.q)
        if p.d < d_min:
            problems.append(f"d={p.d} below (1+eps)(1+n)log2(q)={d_min:.2f}")
    if p.q > 1 and p.beta != ceil_log2(p.q):
        problems.append(f"beta={p.beta} != ceil(log2 q)={ceil_log2(p.q)}")
    if p.sigma <= 0:
        problems.append(f"sigma must be > 0, got {p.sigma}")
    if p.key_sigma <= 0:
        problems.append(f"key_sigma must be > 0, got {p.key_sigma}")
    if p.refresh_mult_interval < 1 or p.refresh_add_interval < 1:
        problems.append("refresh intervals must be positive")
    return problems


def check_profile(p: ParamProfile) -> ParamProfile:
    problems = validate_profile(p)
    if problems:
        raise ProfileError(problems)
    return p


def paper_profile() -> ParamProfile:
    # epsilon is implied by d=4573: 4573 / (241 * log2 57601) - 1
    return ParamProfile(n=240, q=57601, d=4573, epsilon=0.1999, sigma=1.0,
                        name="paper")


# With q < 2n^2 a single tensor key switch at n=40 accumulates ~n^2*beta/2
# noise terms, and a product squares the noise, so the toy profile keeps the
# error noise essentially at zero; the secret keeps a unit-width Gaussian.
# See README "Noise budget".
TOY_SIGMA = 0.1


def toy_profile() -> ParamProfile:
    return ParamProfile(n=40, q=2053, d=560, epsilon=0.2, sigma=TOY_SIGMA,
                        key_sigma=1.0, name="toy")


def security_dimension_estimate(p: ParamProfile, delta: float = 1.01) -> float:
    """Lattice dimension sqrt(n log2 q / log2 delta) needed to attack ``p``."""
    if delta <= 1:
        raise ValueError(f"root-Hermite factor must exceed 1, got {delta}")
    return math.sqrt(p.n * math.log2(p.q) / math.log2(delta))


_CONFIG_FIELDS = {
    "n": int,
    "q": int,
    "d": int,
    "epsilon": float,
    "sigma": float,
    "key_sigma": float,
    "refresh_mult_interval": int,
    "refresh_add_interval": int,
}


def dumps_profile(p: ParamProfile) -> str:
    return "".join(f"{k}={getattr(p, k)}\n" for k in _CONFIG_FIELDS)


def loads_profile(text: str, name: str = "custom") -> ParamProfile:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or key not in _CONFIG_FIELDS:
            raise ValueError(f"line {lineno}: unrecognised entry {raw!r}")
        values[key] = _CONFIG_FIELDS[key](value.strip())
    missing = {"n", "q", "d"} - values.keys()
    if missing:
        raise ValueError(f"profile missing {sorted(missing)}")
    return ParamProfile(name=name, **values)


def resolve_profile(spec: str) -> ParamProfile:
    """Map ``paper``, ``toy`` or a config-file path to a validated profile."""
    if spec == "paper":
        return paper_profile()
    if spec == "toy":
        return toy_profile()
    path = Path(spec)
    return check_profile(loads_profile(path.read_text(), name=path.stem))
