"""Exponential ElGamal: encrypt g^m so that ciphertext products add plaintexts.

Also holds the non-interactive (hash-challenge) proofs the tally relies on:

* a disjunctive Chaum-Pedersen proof that a ciphertext encrypts one of a small
  set of values (0/1 per candidate, 0..max for a ballot's sum), and
* an equality-of-discrete-log proof binding a trustee's decryption share to
  its public verification key.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Iterable, Sequence

from .group import GroupParams
from .rng import EntropySource, system_rng


class NotInRange(ValueError):
    """No exponent m <= bound maps to the given group element."""


class EncryptionError(ValueError):
    pass


class ProofError(ValueError):
    pass


@dataclass(frozen=True)
class KeyPair:
    x: int
    h: int


@dataclass(frozen=True)
class Ciphertext:
    a: int
    b: int

    def to_dict(self) -> dict:
        return {"a": str(self.a), "b": str(self.b)}

    @classmethod
    def from_dict(cls, d: dict) -> "Ciphertext":
        return cls(a=int(d["a"]), b=int(d["b"]))

    def is_valid(self, params: GroupParams) -> bool:
        return params.is_element(self.a) and params.is_element(self.b)


def keypair_from_secret(params: GroupParams, x: int) -> KeyPair:
    return KeyPair(x=x % params.q, h=params.gexp(x))


def validate_keypair(params: GroupParams, kp: KeyPair) -> bool:
    return 0 < kp.x < params.q and kp.h == params.gexp(kp.x)


def keygen(params: GroupParams, rng: EntropySource | None = None) -> KeyPair:
    # x = 0 would give the identity as public key
    return keypair_from_secret(params, params.random_nonzero_scalar(rng))


def encrypt(params: GroupParams, m: int, h: int, r: int, bound: int | None = None) -> Ciphertext:
    if m < 0 or (bound is not None and m > bound):
        raise EncryptionError(f"plaintext {m} outside [0, {bound}]")
    return Ciphertext(params.gexp(r), params.mul(params.gexp(m), params.exp(h, r)))


def reencrypt(params: GroupParams, c: Ciphertext, h: int, r: int) -> Ciphertext:
    return Ciphertext(params.mul(c.a, params.gexp(r)), params.mul(c.b, params.exp(h, r)))


def homomorphic_add(params: GroupParams, c1: Ciphertext, c2: Ciphertext) -> Ciphertext:
    return Ciphertext(params.mul(c1.a, c2.a), params.mul(c1.b, c2.b))


def homomorphic_sum(params: GroupParams, cs: Iterable[Ciphertext]) -> Ciphertext:
    """Product of ciphertexts; the empty product is the trivial encryption of 0."""
    total = Ciphertext(1, 1)
    for c in cs:
        total = homomorphic_add(params, total, c)
    return total


def decrypt_to_group(params: GroupParams, c: Ciphertext, x: int) -> int:
    return params.div(c.b, params.exp(c.a, x))


def decode_dlog(params: GroupParams, y: int, bound: int) -> int:
    """Smallest m in [0, bound] with g^m = y, by linear scan."""
    if bound < 0:
        raise ValueError("bound must be non-negative")
    if bound >= params.q:
        raise ValueError(f"bound {bound} >= group order {params.q}: decoding would be ambiguous")
    acc = 1
    for m in range(bound + 1):
        if acc == y:
            return m
        acc = acc * params.g % params.p
    raise NotInRange(f"no m <= {bound} with g^m = {y}")


def decrypt(params: GroupParams, c: Ciphertext, x: int, bound: int) -> int:
    return decode_dlog(params, decrypt_to_group(params, c, x), bound)


def hash_to_scalar(params: GroupParams, label: str, *parts: object) -> int:
    """SHA-256 over a length-prefixed encoding of the statement, reduced mod q."""
    h = hashlib.sha256()
    for item in (label, params.p, params.q, params.g, *parts):
        data = str(item).encode()
        h.update(len(data).to_bytes(8, "big"))
        h.update(data)
    return int.from_bytes(h.digest(), "big") % params.q


@dataclass(frozen=True)
class DisjunctiveProof:
    """Proof that a ciphertext encrypts g^v for some v in a public value set.

    One (commitment, challenge, response) triple per allowed value; the
    challenges sum to the hash of the statement and all commitments.
    """

    commitments: tuple[tuple[int, int], ...]
    challenges: tuple[int, ...]
    responses: tuple[int, ...]

    def to_dict(self) -> dict:
        return {
            "commitments": [[str(x), str(y)] for x, y in self.commitments],
            "challenges": [str(c) for c in self.challenges],
            "responses": [str(z) for z in self.responses],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DisjunctiveProof":
        return cls(
            commitments=tuple((int(x), int(y)) for x, y in d["commitments"]),
            challenges=tuple(int(c) for c in d["challenges"]),
            responses=tuple(int(z) for z in d["responses"]),
        )


ZeroOneProof = DisjunctiveProof


def _disjunctive_challenge(params, h, c, values, commitments) -> int:
    flat = [v for pair in commitments for v in pair]
    return hash_to_scalar(params, "disjunctive", h, c.a, c.b, ",".join(map(str, values)), *flat)


def prove_plaintext_in(
    params: GroupParams,
    c: Ciphertext,
    m: int,
    r: int,
    h: int,
    values: Sequence[int],
    rng: EntropySource | None = None,
) -> DisjunctiveProof:
    values = list(values)
    if m not in values:
        raise ProofError(f"plaintext {m} not in {values}")
    rng = rng or system_rng()
    real = values.index(m)
    commitments: list[tuple[int, int]] = []
    challenges: list[int] = []
    responses: list[int] = []
    w = params.random_scalar(rng)
    for j, v in enumerate(values):
        if j == real:
            commitments.append((params.gexp(w), params.exp(h, w)))
            challenges.append(0)
            responses.append(0)
            continue
        cj = params.random_scalar(rng)
        zj = params.random_scalar(rng)
        target = params.div(c.b, params.gexp(v))
        commitments.append(
            (
                params.div(params.gexp(zj), params.exp(c.a, cj)),
                params.div(params.exp(h, zj), params.exp(target, cj)),
            )
        )
        challenges.append(cj)
        responses.append(zj)
    total = _disjunctive_challenge(params, h, c, values, commitments)
    challenges[real] = (total - sum(challenges)) % params.q
    responses[real] = (w + challenges[real] * r) % params.q
    return DisjunctiveProof(tuple(commitments), tuple(challenges), tuple(responses))


def verify_plaintext_in(
    params: GroupParams, c: Ciphertext, proof: DisjunctiveProof, h: int, values: Sequence[int]
) -> bool:
    values = list(values)
    if not (len(proof.commitments) == len(proof.challenges) == len(proof.responses) == len(values)):
        return False
    if not (c.is_valid(params) and params.is_element(h)):
        return False
    for (ca, cb), cj, zj, v in zip(proof.commitments, proof.challenges, proof.responses, values):
        if not (params.is_element(ca) and params.is_element(cb)):
            return False
        if not (params.is_scalar(cj) and params.is_scalar(zj)):
            return False
        if params.gexp(zj) != params.mul(ca, params.exp(c.a, cj)):
            return False
        target = params.div(c.b, params.gexp(v))
        if params.exp(h, zj) != params.mul(cb, params.exp(target, cj)):
            return False
    expected = _disjunctive_challenge(params, h, c, values, proof.commitments)
    return sum(proof.challenges) % params.q == expected


def prove_zero_or_one(
    params: GroupParams, c: Ciphertext, m: int, r: int, h: int, rng: EntropySource | None = None
) -> DisjunctiveProof:
    if m not in (0, 1):
        raise ProofError("zero-or-one proof needs m in {0, 1}")
    return prove_plaintext_in(params, c, m, r, h, (0, 1), rng)


def verify_zero_or_one(params: GroupParams, c: Ciphertext, proof: DisjunctiveProof, h: int) -> bool:
    return verify_plaintext_in(params, c, proof, h, (0, 1))


@dataclass(frozen=True)
class DecryptionProof:
    """Chaum-Pedersen transcript for log_g(verification_key) = log_a(share)."""

    commitment_g: int
    commitment_a: int
    challenge: int
    response: int

    def to_dict(self) -> dict:
        return {
            "commitment_g": str(self.commitment_g),
            "commitment_a": str(self.commitment_a),
            "challenge": str(self.challenge),
            "response": str(self.response),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DecryptionProof":
        return cls(*(int(d[k]) for k in ("commitment_g", "commitment_a", "challenge", "response")))


def prove_decryption_share(
    params: GroupParams,
    c: Ciphertext,
    share: int,
    x_i: int,
    verification_key: int,
    rng: EntropySource | None = None,
) -> DecryptionProof:
    if params.gexp(x_i) != verification_key or params.exp(c.a, x_i) != share:
        raise ProofError("key material does not match the share")
    w = params.random_scalar(rng)
    ca, cb = params.gexp(w), params.exp(c.a, w)
    e = hash_to_scalar(params, "decryption-share", c.a, c.b, verification_key, share, ca, cb)
    return DecryptionProof(ca, cb, e, (w + e * x_i) % params.q)


def verify_decryption_share(
    params: GroupParams, c: Ciphertext, share: int, proof: DecryptionProof, verification_key: int
) -> bool:
    if not (c.is_valid(params) and params.is_element(share) and params.is_element(verification_key)):
        return False
    if not (params.is_element(proof.commitment_g) and params.is_element(proof.commitment_a)):
        return False
    if not (params.is_scalar(proof.challenge) and params.is_scalar(proof.response)):
        return False
    e = hash_to_scalar(
        params, "decryption-share", c.a, c.b, verification_key, share, proof.commitment_g, proof.commitment_a
    )
    if e != proof.challenge:
        return False
    z = proof.response
    return params.gexp(z) == params.mul(proof.commitment_g, params.exp(verification_key, e)) and params.exp(
        c.a, z
    ) == params.mul(proof.commitment_a, params.exp(share, e))
