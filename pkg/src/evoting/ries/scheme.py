"""RIES voter keys and vote codes, plus a small election simulator.

Voter key:  Kp = E_master(VnID || ParGp || ElID)
Vote code:  RnPID = MDC(MAC_Kp(choice || ElID || birthyear))

The same master key, participant group and election id are used for every
voter, so Kp depends on nothing but the (public) voter identity. Concatenation
uses 2-byte length prefixes. MDC is SHA-256 truncated to 16 bytes.
"""

from __future__ import annotations

import csv
import hashlib
import hmac
import io
import random
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .cipher import NOMINAL_WIDTH, TOY_WIDTHS, cipher_for

DEFAULT_BIRTHYEARS = range(1900, 2011)
RNPID_BYTES = 16


def encode_fields(*fields: object) -> bytes:
    out = b""
    for f in fields:
        data = f if isinstance(f, bytes) else str(f).encode()
        if len(data) > 0xFFFF:
            raise ValueError("field too long")
        out += len(data).to_bytes(2, "big") + data
    return out


def mdc(mac: bytes) -> bytes:
    return hashlib.sha256(b"RIES-MDC" + mac).digest()[:RNPID_BYTES]


def code_hash(rnpid: bytes) -> str:
    """Form in which valid codes appear in the pre-election reference table."""
    return hashlib.sha256(rnpid).hexdigest()


@dataclass(frozen=True)
class RiesParams:
    master_key: int
    election_id: str
    participant_group: str = "1"
    key_bits: int = 20
    candidates: tuple[str, ...] = ("A", "B", "C")

    def __post_init__(self) -> None:
        if self.key_bits not in TOY_WIDTHS and self.key_bits != NOMINAL_WIDTH:
            raise ValueError(f"key width {self.key_bits} not in 16..28 or {NOMINAL_WIDTH}")
        if not 0 <= self.master_key < (1 << self.key_bits):
            raise ValueError("master key wider than key_bits")
        object.__setattr__(self, "candidates", tuple(self.candidates))

    @property
    def cipher(self):
        return cipher_for(self.key_bits)

    def to_dict(self) -> dict:
        return {
            "master_key": format(self.master_key, "x"),
            "election_id": self.election_id,
            "participant_group": self.participant_group,
            "key_bits": self.key_bits,
            "candidates": list(self.candidates),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "RiesParams":
        return cls(
            master_key=int(d["master_key"], 16),
            election_id=d["election_id"],
            participant_group=d.get("participant_group", "1"),
            key_bits=int(d["key_bits"]),
            candidates=tuple(d["candidates"]),
        )


@dataclass(frozen=True)
class VoterCredential:
    vnid: str
    kp: int


@dataclass(frozen=True)
class VoteCode:
    rnpid: bytes
    choice: str
    election_id: str
    birthyear: int


def derive_voter_key(params: RiesParams, vnid: str) -> int:
    return params.cipher.derive(params.master_key, encode_fields(vnid, params.participant_group, params.election_id))


def vote_message(choice: str, election_id: str, birthyear: int) -> bytes:
    return encode_fields(choice, election_id, birthyear)


def make_vote_code(params: RiesParams, kp: int, choice: str, birthyear: int, cipher=None) -> VoteCode:
    if choice not in params.candidates:
        raise ValueError(f"unknown choice {choice!r}")
    cipher = cipher or params.cipher
    mac = cipher.mac(kp, vote_message(choice, params.election_id, birthyear))
    return VoteCode(mdc(mac), choice, params.election_id, birthyear)


def verify_vote_code(params: RiesParams, vnid: str, code: VoteCode) -> bool:
    if code.election_id != params.election_id or code.choice not in params.candidates:
        return False
    expected = make_vote_code(params, derive_voter_key(params, vnid), code.choice, code.birthyear)
    return hmac.compare_digest(expected.rnpid, code.rnpid)


@dataclass(frozen=True)
class RiesVoter:
    vnid: str
    birthyear: int
    pseudo_id: str


@dataclass
class RiesElection:
    """A simulated election: registry, both published tables, and ground truth."""

    params: RiesParams
    voters: list[RiesVoter]
    votes: dict[str, str | None]  # vnid -> choice, None if abstained
    reference: list[tuple[str, str]] = field(default_factory=list)  # (pseudo id, code hash)
    published: list[tuple[str, str]] = field(default_factory=list)  # (pseudo id, RnPID hex)

    def reference_index(self) -> dict[str, str]:
        return {h: pid for pid, h in self.reference}

    def truth(self) -> dict:
        return {v.vnid: {"birthyear": v.birthyear, "pseudo_id": v.pseudo_id, "vote": self.votes[v.vnid]} for v in self.voters}


def simulate_election(
    params: RiesParams,
    n_voters: int,
    turnout: float = 0.7,
    rng: random.Random | None = None,
    birthyears: Sequence[int] = DEFAULT_BIRTHYEARS,
    vnid_prefix: str = "BSN",
) -> RiesElection:
    rng = rng or random.Random()
    cipher = params.cipher
    vnids = rng.sample(range(100_000_000, 999_999_999), n_voters)
    voters, votes, reference, published = [], {}, [], []
    for num in vnids:
        vnid = f"{vnid_prefix}{num}"
        voter = RiesVoter(vnid, rng.choice(list(birthyears)), format(rng.getrandbits(64), "016x"))
        voters.append(voter)
        kp = derive_voter_key(params, vnid)
        codes = {c: make_vote_code(params, kp, c, voter.birthyear, cipher) for c in params.candidates}
        for c in params.candidates:
            reference.append((voter.pseudo_id, code_hash(codes[c].rnpid)))
        choice = rng.choice(params.candidates) if rng.random() < turnout else None
        votes[vnid] = choice
        if choice is not None:
            published.append((voter.pseudo_id, codes[choice].rnpid.hex()))
    rng.shuffle(reference)
    rng.shuffle(published)
    return RiesElection(params, voters, votes, reference, published)


def table_to_csv(rows: Iterable[tuple[str, str]], header: tuple[str, str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def table_from_csv(text: str) -> list[tuple[str, str]]:
    rows = list(csv.reader(io.StringIO(text)))
    return [(a, b) for a, b in rows[1:]]
