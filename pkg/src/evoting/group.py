"""Arithmetic in the order-q subgroup of Z_p^* for a safe prime p = 2q + 1.

Scalars are plain ints in [0, q); group elements are plain ints in [1, p)
lying in the subgroup. Values are validated at the boundaries (deserialization,
proof verification) rather than wrapped in per-value objects.

No guarantees are made about timing or other side channels.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import gmpy2

from .rng import EntropySource, randbelow, system_rng

MILLER_RABIN_ROUNDS = 64


@dataclass(frozen=True)
class GroupParams:
    p: int
    q: int
    g: int
    name: str = "custom"

    def exp(self, base: int, e: int) -> int:
        return int(gmpy2.powmod(base, e % self.q, self.p))

    def gexp(self, e: int) -> int:
        return self.exp(self.g, e)

    def mul(self, a: int, b: int) -> int:
        return a * b % self.p

    def inv(self, a: int) -> int:
        return int(gmpy2.invert(a, self.p))

    def div(self, a: int, b: int) -> int:
        return a * self.inv(b) % self.p

    def scalar_add(self, a: int, b: int) -> int:
        return (a + b) % self.q

    def scalar_sub(self, a: int, b: int) -> int:
        return (a - b) % self.q

    def scalar_mul(self, a: int, b: int) -> int:
        return a * b % self.q

    def scalar_inv(self, s: int) -> int:
        if s % self.q == 0:
            raise ZeroDivisionError("zero has no inverse mod q")
        return int(gmpy2.invert(s, self.q))

    def random_scalar(self, rng: EntropySource | None = None) -> int:
        return randbelow(rng or system_rng(), self.q)

    def random_nonzero_scalar(self, rng: EntropySource | None = None) -> int:
        rng = rng or system_rng()
        while True:
            s = randbelow(rng, self.q)
            if s:
                return s

    def is_scalar(self, s: object) -> bool:
        return isinstance(s, int) and 0 <= s < self.q

    def is_element(self, a: object) -> bool:
        return (
            isinstance(a, int)
            and 0 < a < self.p
            and gmpy2.powmod(a, self.q, self.p) == 1
        )

    def to_dict(self) -> dict[str, str]:
        return {"name": self.name, "p": str(self.p), "q": str(self.q), "g": str(self.g)}

    @classmethod
    def from_dict(cls, d: Mapping[str, str]) -> "GroupParams":
        return cls(p=int(d["p"]), q=int(d["q"]), g=int(d["g"]), name=d.get("name", "custom"))


def _is_probable_prime(n: int) -> bool:
    return n >= 2 and bool(gmpy2.is_prime(n, MILLER_RABIN_ROUNDS))


def validate_params(params: GroupParams) -> bool:
    """True iff p, q are prime, p = 2q + 1, and g generates the order-q subgroup.

    Never raises on malformed input.
    """
    try:
        p, q, g = params.p, params.q, params.g
        if not all(isinstance(v, int) and not isinstance(v, bool) for v in (p, q, g)):
            return False
        if p != 2 * q + 1:
            return False
        if not (_is_probable_prime(q) and _is_probable_prime(p)):
            return False
        if not 1 < g < p:
            return False
        return pow(g, q, p) == 1
    except Exception:
        return False


def generate_group(bits: int, rng: EntropySource | None = None) -> GroupParams:
    """Fresh safe-prime group with a `bits`-bit modulus (slow beyond ~512 bits)."""
    if bits < 4:
        raise ValueError("bits too small")
    rng = rng or system_rng()
    while True:
        q = randbelow(rng, 1 << (bits - 1)) | (1 << (bits - 2)) | 1
        if _is_probable_prime(q) and _is_probable_prime(2 * q + 1):
            p = 2 * q + 1
            # squares generate the order-q subgroup
            return GroupParams(p=p, q=q, g=4, name=f"generated-{bits}")


TOY = GroupParams(p=23, q=11, g=2, name="toy")

# 2048-bit MODP group (RFC 3526, group 14). p = 7 mod 8, so 2 is a quadratic
# residue and generates the order-q subgroup.
_MODP2048_P = int(
    "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD1"
    "29024E088A67CC74020BBEA63B139B22514A08798E3404DD"
    "EF9519B3CD3A431B302B0A6DF25F14374FE1356D6D51C245"
    "E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED"
    "EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3D"
    "C2007CB8A163BF0598DA48361C55D39A69163FA8FD24CF5F"
    "83655D23DCA3AD961C62F356208552BB9ED529077096966D"
    "670C354E4ABC9804F1746C08CA18217C32905E462E36CE3B"
    "E39E772C180E86039B2783A2EC07A28FB5C55DF06F4C52C9"
    "DE2BCBF6955817183995497CEA956AE515D2261898FA0510"
    "15728E5A8AACAA68FFFFFFFFFFFFFFFF",
    16,
)
MODP2048 = GroupParams(p=_MODP2048_P, q=(_MODP2048_P - 1) // 2, g=2, name="modp2048")

BUILTIN_GROUPS = {"toy": TOY, "modp2048": MODP2048}


def group_from_config(value: str | Mapping[str, str]) -> GroupParams:
    """Resolve a group by built-in name or explicit {p, q, g} decimal strings."""
    if isinstance(value, str):
        try:
            return BUILTIN_GROUPS[value]
        except KeyError:
            raise ValueError(f"unknown group {value!r}; expected one of {sorted(BUILTIN_GROUPS)}") from None
    params = GroupParams.from_dict(value)
    if not validate_params(params):
        raise ValueError("group parameters failed validation")
    return params
