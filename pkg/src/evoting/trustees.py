"""Dealer-based threshold key setup and k-of-n decryption of tallies.

A trusted dealer draws the election secret x, publishes h = g^x, hands each
trustee a Shamir share x_i together with the public verification key
v_i = g^(x_i), and then forgets x. Decryption recombines the partial
decryptions a^(x_i) with Lagrange coefficients in the exponent.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from . import elgamal
from .elgamal import Ciphertext, DecryptionProof
from .group import GroupParams
from .rng import EntropySource, system_rng
from .sharing import SharePoint, SharingPolicy, lagrange_at_zero, shares_from_coefficients


class InsufficientShares(RuntimeError):
    def __init__(self, have: int, need: int) -> None:
        self.have = have
        self.need = need
        missing = need - have
        super().__init__(f"need {missing} more trustee{'s' if missing != 1 else ''} ({have} of {need} available)")


class InvalidShareProof(RuntimeError):
    def __init__(self, indices: Sequence[int]) -> None:
        self.indices = sorted(indices)
        super().__init__(f"invalid decryption share from trustee(s) {self.indices}")


@dataclass(frozen=True)
class TrusteeKey:
    index: int
    x_i: int
    v_i: int

    def to_dict(self) -> dict:
        return {"index": self.index, "x_i": str(self.x_i), "v_i": str(self.v_i)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "TrusteeKey":
        return cls(index=int(d["index"]), x_i=int(d["x_i"]), v_i=int(d["v_i"]))

    def save(self, path: Path) -> None:
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: Path) -> "TrusteeKey":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class DecryptionShare:
    index: int
    share: int
    proof: DecryptionProof

    def to_dict(self) -> dict:
        return {"index": self.index, "share": str(self.share), "proof": self.proof.to_dict()}

    @classmethod
    def from_dict(cls, d: Mapping) -> "DecryptionShare":
        return cls(int(d["index"]), int(d["share"]), DecryptionProof.from_dict(d["proof"]))


@dataclass(frozen=True)
class ElectionKey:
    """Public output of the dealer."""

    h: int
    policy: SharingPolicy
    verification_keys: dict[int, int]


def _issue(params: GroupParams, coefficients: Sequence[int], policy: SharingPolicy):
    shares = shares_from_coefficients([c % params.q for c in coefficients], policy.n, params.q)
    keys = [TrusteeKey(s.index, s.value, params.gexp(s.value)) for s in shares]
    public = ElectionKey(
        h=params.gexp(coefficients[0]),
        policy=policy,
        verification_keys={k.index: k.v_i for k in keys},
    )
    return public, keys


def dealer_keygen(
    params: GroupParams, policy: SharingPolicy, rng: EntropySource | None = None
) -> tuple[ElectionKey, list[TrusteeKey]]:
    rng = rng or system_rng()
    coefficients = [params.random_nonzero_scalar(rng)]
    coefficients += [params.random_scalar(rng) for _ in range(policy.k - 1)]
    public, keys = _issue(params, coefficients, policy)
    # the polynomial, and with it x, goes out of scope here
    del coefficients
    return public, keys


def dealer_keygen_from_coefficients(
    params: GroupParams, coefficients: Sequence[int], policy: SharingPolicy
) -> tuple[ElectionKey, list[TrusteeKey]]:
    """Deterministic variant for tests: coefficients[0] is the election secret."""
    if len(coefficients) != policy.k:
        raise ValueError("need exactly k coefficients")
    return _issue(params, coefficients, policy)


def partial_decrypt(
    params: GroupParams, c: Ciphertext, key: TrusteeKey, rng: EntropySource | None = None
) -> DecryptionShare:
    share = params.exp(c.a, key.x_i)
    proof = elgamal.prove_decryption_share(params, c, share, key.x_i, key.v_i, rng)
    return DecryptionShare(key.index, share, proof)


def invalid_shares(
    params: GroupParams,
    c: Ciphertext,
    shares: Iterable[DecryptionShare],
    verification_keys: Mapping[int, int],
) -> list[int]:
    bad = []
    for s in shares:
        v = verification_keys.get(s.index)
        if v is None or not elgamal.verify_decryption_share(params, c, s.share, s.proof, v):
            bad.append(s.index)
    return bad


def recombine(params: GroupParams, shares: Sequence[DecryptionShare]) -> int:
    """a^x from partial decryptions, without any proof checks."""
    indices = [s.index for s in shares]
    acc = 1
    for s in shares:
        acc = params.mul(acc, params.exp(s.share, lagrange_at_zero(indices, s.index, params.q)))
    return acc


def combine(
    params: GroupParams,
    c: Ciphertext,
    shares: Sequence[DecryptionShare],
    verification_keys: Mapping[int, int],
    policy: SharingPolicy,
) -> int:
    """Verify every share, recombine a^x and return g^m."""
    distinct = {s.index for s in shares}
    if len(distinct) != len(shares):
        raise ValueError("duplicate trustee index among shares")
    if len(shares) < policy.k:
        raise InsufficientShares(len(shares), policy.k)
    bad = invalid_shares(params, c, shares, verification_keys)
    if bad:
        raise InvalidShareProof(bad)
    return params.div(c.b, recombine(params, shares))


def to_share_points(keys: Iterable[TrusteeKey]) -> list[SharePoint]:
    return [SharePoint(k.index, k.x_i) for k in keys]
