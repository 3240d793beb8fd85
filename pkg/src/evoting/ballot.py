"""Ballot preparation: encrypt, commit, audit-or-seal, authenticate and cast.

A prepared ballot can be audited any number of times. Each audit opens the
ballot (ciphertexts, randomness and plaintext go to the voter), spends it, and
re-encrypts the same choices with fresh randomness. Sealing drops the
randomness and plaintext; only a sealed ballot can be cast.
"""

from __future__ import annotations

import hashlib
import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Mapping, Sequence

from . import elgamal
from .elgamal import Ciphertext, DisjunctiveProof
from .record import ElectionRecord
from .rng import EntropySource, system_rng

if TYPE_CHECKING:
    from .board import BulletinBoard
    from .roster import Roster

log = logging.getLogger(__name__)


class BallotError(ValueError):
    pass


class BallotStateError(RuntimeError):
    pass


class CoercionWarning(UserWarning):
    pass


COERCION_NOTICE = (
    "COERCION RESISTANCE IS NOT PROVIDED: this export lets anyone holding it "
    "confirm exactly how this ballot votes."
)


@dataclass(frozen=True)
class BallotPlain:
    election_id: str
    choices: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "choices", tuple(self.choices))

    def check(self, record: ElectionRecord) -> None:
        """Raise BallotError naming the first violated constraint."""
        if self.election_id != record.election_id:
            raise BallotError(f"ballot is for election {self.election_id!r}, not {record.election_id!r}")
        if not self.choices:
            raise BallotError("empty candidate list")
        if len(self.choices) != record.num_candidates:
            raise BallotError(f"expected {record.num_candidates} choices, got {len(self.choices)}")
        for i, c in enumerate(self.choices):
            if c not in (0, 1) or isinstance(c, bool):
                raise BallotError(f"choice {i} is {c!r}; each choice must be 0 or 1")
        if sum(self.choices) > record.max_selections:
            raise BallotError(f"overvote: {sum(self.choices)} selections, at most {record.max_selections} allowed")


def ballot_commitment(ciphertexts: Sequence[Ciphertext]) -> str:
    """SHA-256 over the length-prefixed decimal components, in candidate order."""
    h = hashlib.sha256(b"ballot-commitment")
    h.update(len(ciphertexts).to_bytes(8, "big"))
    for c in ciphertexts:
        for v in (c.a, c.b):
            data = str(v).encode()
            h.update(len(data).to_bytes(8, "big") + data)
    return h.hexdigest()


@dataclass(frozen=True)
class EncryptedBallot:
    """The public part of a ballot: what is posted to the board."""

    election_id: str
    ciphertexts: tuple[Ciphertext, ...]
    proofs: tuple[DisjunctiveProof, ...]
    sum_proof: DisjunctiveProof
    commitment: str

    def to_dict(self) -> dict:
        return {
            "election_id": self.election_id,
            "ciphertexts": [c.to_dict() for c in self.ciphertexts],
            "proofs": [p.to_dict() for p in self.proofs],
            "sum_proof": self.sum_proof.to_dict(),
            "commitment": self.commitment,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "EncryptedBallot":
        return cls(
            election_id=d["election_id"],
            ciphertexts=tuple(Ciphertext.from_dict(c) for c in d["ciphertexts"]),
            proofs=tuple(DisjunctiveProof.from_dict(p) for p in d["proofs"]),
            sum_proof=DisjunctiveProof.from_dict(d["sum_proof"]),
            commitment=d["commitment"],
        )

    def problems(self, record: ElectionRecord) -> list[str]:
        """Every reason this ballot is not acceptable for `record` (empty if valid)."""
        out = []
        params, h = record.params, record.h
        if self.election_id != record.election_id:
            out.append("wrong election id")
        if len(self.ciphertexts) != record.num_candidates or len(self.proofs) != record.num_candidates:
            out.append("wrong number of ciphertexts or proofs")
            return out
        if self.commitment != ballot_commitment(self.ciphertexts):
            out.append("commitment mismatch")
        for i, (c, p) in enumerate(zip(self.ciphertexts, self.proofs)):
            if not elgamal.verify_zero_or_one(params, c, p, h):
                out.append(f"zero-or-one proof {i} fails")
        total = elgamal.homomorphic_sum(params, self.ciphertexts)
        if not elgamal.verify_plaintext_in(params, total, self.sum_proof, h, range(record.max_selections + 1)):
            out.append("selection-count proof fails")
        return out


@dataclass(frozen=True)
class AuditPackage:
    election_id: str
    ciphertexts: tuple[Ciphertext, ...]
    randomness: tuple[int, ...]
    plaintext: tuple[int, ...]
    commitment: str

    def to_dict(self) -> dict:
        return {
            "election_id": self.election_id,
            "ciphertexts": [c.to_dict() for c in self.ciphertexts],
            "randomness": [str(r) for r in self.randomness],
            "plaintext": list(self.plaintext),
            "commitment": self.commitment,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "AuditPackage":
        return cls(
            election_id=d["election_id"],
            ciphertexts=tuple(Ciphertext.from_dict(c) for c in d["ciphertexts"]),
            randomness=tuple(int(r) for r in d["randomness"]),
            plaintext=tuple(int(m) for m in d["plaintext"]),
            commitment=d["commitment"],
        )


@dataclass(frozen=True)
class CoercionExport(AuditPackage):
    destination: str = ""
    notice: str = COERCION_NOTICE

    def to_dict(self) -> dict:
        d = super().to_dict()
        d["destination"] = self.destination
        d["notice"] = self.notice
        return d


@dataclass(frozen=True)
class Receipt:
    election_id: str
    identity: str
    commitment: str
    sequence: int

    def to_dict(self) -> dict:
        return {
            "election_id": self.election_id,
            "identity": self.identity,
            "commitment": self.commitment,
            "sequence": self.sequence,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Receipt":
        return cls(d["election_id"], d["identity"], d["commitment"], int(d["sequence"]))


@dataclass
class PreparedBallot:
    encrypted: EncryptedBallot
    randomness: tuple[int, ...]
    plaintext: tuple[int, ...]
    state: str = "prepared"

    @property
    def commitment(self) -> str:
        return self.encrypted.commitment

    @property
    def ciphertexts(self) -> tuple[Ciphertext, ...]:
        return self.encrypted.ciphertexts


@dataclass(frozen=True)
class SealedBallot:
    """Ciphertexts, proofs and commitment only; nothing secret survives sealing."""

    encrypted: EncryptedBallot
    state: str = field(default="sealed", init=False)

    @property
    def commitment(self) -> str:
        return self.encrypted.commitment

    def to_dict(self) -> dict:
        return {"state": self.state, **self.encrypted.to_dict()}


def check_audit_package(
    record: ElectionRecord, package: AuditPackage, intended: BallotPlain, shown_commitment: str | None = None
) -> bool:
    """Voter-side check of an opened ballot; needs only public election data."""
    params, h = record.params, record.h
    if package.election_id != record.election_id or intended.election_id != record.election_id:
        return False
    if tuple(package.plaintext) != tuple(intended.choices):
        return False
    if not (len(package.ciphertexts) == len(package.randomness) == len(intended.choices)):
        return False
    if package.commitment != ballot_commitment(package.ciphertexts):
        return False
    if shown_commitment is not None and package.commitment != shown_commitment:
        return False
    for c, r, m in zip(package.ciphertexts, package.randomness, intended.choices):
        if c != elgamal.encrypt(params, m, h, r):
            return False
        # opening with the randomness must yield g^intended
        if c.a != params.gexp(r) or params.div(c.b, params.exp(h, r)) != params.gexp(m):
            return False
    return True


def package_is_consistent(record: ElectionRecord, package: AuditPackage) -> bool:
    return check_audit_package(record, package, BallotPlain(package.election_id, package.plaintext))


class BallotPreparationSystem:
    def __init__(self, record: ElectionRecord, rng: EntropySource | None = None) -> None:
        self.record = record
        self.rng = rng or system_rng()

    def plaintext_to_encrypt(self, choices: tuple[int, ...]) -> tuple[int, ...]:
        return choices

    def _fresh_randomness(self, avoid: Sequence[int] | None) -> tuple[int, ...]:
        out = []
        for i in range(self.record.num_candidates):
            while True:
                r = self.record.params.random_nonzero_scalar(self.rng)
                # never reuse randomness that an audit has already revealed
                if avoid is None or r != avoid[i]:
                    break
            out.append(r)
        return tuple(out)

    def prepare(self, ballot: BallotPlain, avoid: Sequence[int] | None = None) -> PreparedBallot:
        ballot.check(self.record)
        params, h = self.record.params, self.record.h
        randomness = self._fresh_randomness(avoid)
        encrypted_choices = self.plaintext_to_encrypt(ballot.choices)
        cts = tuple(elgamal.encrypt(params, m, h, r) for m, r in zip(encrypted_choices, randomness))
        proofs = tuple(
            elgamal.prove_zero_or_one(params, c, m, r, h, self.rng)
            for c, m, r in zip(cts, encrypted_choices, randomness)
        )
        total = elgamal.homomorphic_sum(params, cts)
        sum_proof = elgamal.prove_plaintext_in(
            params,
            total,
            sum(encrypted_choices),
            sum(randomness) % params.q,
            h,
            range(self.record.max_selections + 1),
            self.rng,
        )
        encrypted = EncryptedBallot(self.record.election_id, cts, proofs, sum_proof, ballot_commitment(cts))
        return PreparedBallot(encrypted, randomness, tuple(ballot.choices))

    def open(self, pb: PreparedBallot) -> AuditPackage:
        _require_prepared(pb, "audit")
        pb.state = "audited"
        return AuditPackage(self.record.election_id, pb.ciphertexts, pb.randomness, pb.plaintext, pb.commitment)

    def audit(self, pb: PreparedBallot, intended: BallotPlain) -> tuple[bool, PreparedBallot, AuditPackage]:
        """Open `pb` for the voter, check it, and re-prepare with new randomness."""
        shown = pb.commitment
        package = self.open(pb)
        verdict = check_audit_package(self.record, package, intended, shown)
        nxt = self.prepare(BallotPlain(self.record.election_id, package.plaintext), avoid=package.randomness)
        return verdict, nxt, package

    def coerce_export(self, pb: PreparedBallot, destination: str, path: Path | None = None) -> CoercionExport:
        _require_prepared(pb, "export")
        export = CoercionExport(
            self.record.election_id, pb.ciphertexts, pb.randomness, pb.plaintext, pb.commitment, destination
        )
        warnings.warn(COERCION_NOTICE, CoercionWarning, stacklevel=2)
        log.warning("%s (destination: %s)", COERCION_NOTICE, destination)
        if path is not None:
            Path(path).write_text(json.dumps(export.to_dict(), indent=2) + "\n")
        return export


def _require_prepared(pb: object, action: str) -> None:
    if isinstance(pb, SealedBallot):
        raise BallotStateError(f"cannot {action} a sealed ballot")
    if not isinstance(pb, PreparedBallot) or pb.state != "prepared":
        state = getattr(pb, "state", type(pb).__name__)
        raise BallotStateError(f"cannot {action} a ballot in state {state!r}")


def prepare(record: ElectionRecord, ballot: BallotPlain, rng: EntropySource | None = None) -> PreparedBallot:
    return BallotPreparationSystem(record, rng).prepare(ballot)


def seal(pb: PreparedBallot) -> SealedBallot:
    _require_prepared(pb, "seal")
    pb.state = "sealed"
    pb.randomness = ()
    pb.plaintext = ()
    return SealedBallot(pb.encrypted)


def authenticate_and_cast(
    sealed: SealedBallot, credential: str, board: "BulletinBoard", roster: "Roster"
) -> Receipt:
    if not isinstance(sealed, SealedBallot):
        raise BallotStateError("only sealed ballots can be cast")
    identity = roster.authenticate(credential)
    entry = board.post(identity, sealed.encrypted)
    return Receipt(board.election_id, identity, entry.ballot.commitment, entry.sequence)
