"""Shamir (k, n) secret sharing over Z_q with Lagrange reconstruction at zero."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import gmpy2

from .rng import EntropySource, randbelow, system_rng


class SharingError(ValueError):
    pass


@dataclass(frozen=True)
class SharePoint:
    index: int
    value: int

    def to_dict(self) -> dict:
        return {"index": self.index, "value": str(self.value)}

    @classmethod
    def from_dict(cls, d: dict) -> "SharePoint":
        return cls(index=int(d["index"]), value=int(d["value"]))


@dataclass(frozen=True)
class SharingPolicy:
    k: int
    n: int

    def __post_init__(self) -> None:
        if not (isinstance(self.k, int) and isinstance(self.n, int)) or not 1 <= self.k <= self.n:
            raise SharingError(f"invalid policy k={self.k}, n={self.n}: need 1 <= k <= n")

    def to_dict(self) -> dict:
        return {"k": self.k, "n": self.n}

    @classmethod
    def from_dict(cls, d: dict) -> "SharingPolicy":
        return cls(k=int(d["k"]), n=int(d["n"]))


def evaluate_polynomial(coefficients: Sequence[int], x: int, q: int) -> int:
    """Horner evaluation of sum(c_i * x^i) mod q."""
    acc = 0
    for c in reversed(coefficients):
        acc = (acc * x + c) % q
    return acc


def shares_from_coefficients(coefficients: Sequence[int], n: int, q: int) -> list[SharePoint]:
    """Evaluate the polynomial with the given coefficients (constant first) at 1..n."""
    if not coefficients:
        raise SharingError("polynomial needs at least the constant term")
    if n < len(coefficients):
        raise SharingError("fewer shares than the threshold")
    return [SharePoint(i, evaluate_polynomial(coefficients, i, q)) for i in range(1, n + 1)]


def split(
    secret: int, policy: SharingPolicy, q: int, rng: EntropySource | None = None
) -> list[SharePoint]:
    """Split `secret` into policy.n shares, any policy.k of which reconstruct it."""
    if not 0 <= secret < q:
        raise SharingError("secret must lie in [0, q)")
    rng = rng or system_rng()
    coefficients = [secret] + [randbelow(rng, q) for _ in range(policy.k - 1)]
    return shares_from_coefficients(coefficients, policy.n, q)


def lagrange_at_zero(indices: Iterable[int], i: int, q: int) -> int:
    """Coefficient of share `i` when interpolating at x = 0 over `indices`."""
    indices = list(indices)
    if len(set(indices)) != len(indices):
        raise SharingError("duplicate share indices")
    if i not in indices:
        raise SharingError(f"index {i} not among {indices}")
    num, den = 1, 1
    for j in indices:
        if j == i:
            continue
        num = num * j % q
        den = den * (j - i) % q
    if den == 0:
        raise SharingError("indices collide modulo q")
    return num * int(gmpy2.invert(den, q)) % q


def reconstruct(shares: Sequence[SharePoint], q: int) -> int:
    if not shares:
        raise SharingError("no shares given")
    indices = [s.index for s in shares]
    if len(set(indices)) != len(indices):
        raise SharingError("duplicate share indices")
    if any(i < 1 for i in indices):
        raise SharingError("share indices must be >= 1")
    return sum(s.value * lagrange_at_zero(indices, s.index, q) for s in shares) % q
