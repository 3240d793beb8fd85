"""Public election record: everything a third party needs to verify an election."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .group import GroupParams
from .sharing import SharingPolicy


def canonical_json(obj: object) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True).encode()


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def roster_digest(identities: Iterable[str]) -> str:
    h = hashlib.sha256(b"roster")
    for ident in sorted(identities):
        data = ident.encode()
        h.update(len(data).to_bytes(8, "big") + data)
    return h.hexdigest()


@dataclass(frozen=True)
class ElectionRecord:
    election_id: str
    candidates: tuple[str, ...]
    max_selections: int
    params: GroupParams
    h: int
    policy: SharingPolicy
    verification_keys: Mapping[int, int]
    roster: tuple[str, ...] = ()  # identities as they appear on the board
    pseudonyms: bool = False
    notes: dict = field(default_factory=dict)

    @property
    def num_candidates(self) -> int:
        return len(self.candidates)

    @property
    def roster_digest(self) -> str:
        return roster_digest(self.roster)

    def to_dict(self) -> dict:
        return {
            "election_id": self.election_id,
            "candidates": list(self.candidates),
            "max_selections": self.max_selections,
            "group": self.params.to_dict(),
            "public_key": str(self.h),
            "policy": self.policy.to_dict(),
            "verification_keys": {str(i): str(v) for i, v in sorted(self.verification_keys.items())},
            "roster": list(self.roster),
            "roster_digest": self.roster_digest,
            "pseudonyms": self.pseudonyms,
            "notes": dict(self.notes),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ElectionRecord":
        return cls(
            election_id=d["election_id"],
            candidates=tuple(d["candidates"]),
            max_selections=int(d["max_selections"]),
            params=GroupParams.from_dict(d["group"]),
            h=int(d["public_key"]),
            policy=SharingPolicy.from_dict(d["policy"]),
            verification_keys={int(i): int(v) for i, v in d["verification_keys"].items()},
            roster=tuple(d.get("roster", ())),
            pseudonyms=bool(d.get("pseudonyms", False)),
            notes=dict(d.get("notes", {})),
        )

    def header(self) -> dict:
        """Fields fixed in the bulletin board's header record."""
        d = self.to_dict()
        del d["roster"], d["notes"], d["pseudonyms"]
        if "public_seed" in self.notes:
            # replayable non-secret choices only; never ballot or key randomness
            d["public_seed"] = self.notes["public_seed"]
        return d
