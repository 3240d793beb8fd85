"""Voter roster and shared-secret authentication."""

from __future__ import annotations

import hashlib
import hmac
from dataclasses import dataclass
from typing import Iterable, Mapping


class AuthenticationError(PermissionError):
    pass


class UnknownCredential(AuthenticationError):
    pass


class IneligibleIdentity(AuthenticationError):
    pass


def credential_digest(credential: str) -> str:
    return hashlib.sha256(b"credential:" + credential.encode()).hexdigest()


@dataclass(frozen=True)
class Voter:
    identity: str
    credential_digest: str
    pseudonym: str | None = None
    eligible: bool = True

    def to_dict(self) -> dict:
        d = {"identity": self.identity, "credential_digest": self.credential_digest, "eligible": self.eligible}
        if self.pseudonym is not None:
            d["pseudonym"] = self.pseudonym
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "Voter":
        digest = d.get("credential_digest")
        if digest is None and "credential" in d:
            digest = credential_digest(d["credential"])
        if digest is None:
            raise ValueError(f"roster entry {d.get('identity')!r} has no credential")
        return cls(d["identity"], digest, d.get("pseudonym"), bool(d.get("eligible", True)))


class Roster:
    def __init__(self, voters: Iterable[Voter], pseudonyms: bool = False) -> None:
        self.voters = list(voters)
        self.pseudonyms = pseudonyms
        names = [v.identity for v in self.voters]
        if len(set(names)) != len(names):
            raise ValueError("roster identities must be unique")
        if pseudonyms and any(v.pseudonym is None for v in self.voters):
            raise ValueError("pseudonym mode needs a pseudonym for every voter")
        self._by_identity = {v.identity: v for v in self.voters}

    def board_identity(self, identity: str) -> str:
        v = self._by_identity[identity]
        return v.pseudonym if self.pseudonyms else v.identity  # type: ignore[return-value]

    def public_identities(self) -> tuple[str, ...]:
        """Board identities of every eligible voter."""
        return tuple(self.board_identity(v.identity) for v in self.voters if v.eligible)

    def authenticate(self, credential: str) -> str:
        """Return the board identity the credential belongs to."""
        digest = credential_digest(credential)
        for v in self.voters:
            if hmac.compare_digest(v.credential_digest, digest):
                if not v.eligible:
                    raise IneligibleIdentity(f"{v.identity} is not eligible in this election")
                return self.board_identity(v.identity)
        raise UnknownCredential("credential not recognised")

    def __contains__(self, identity: str) -> bool:
        return identity in self._by_identity

    def to_dict(self) -> dict:
        return {"pseudonyms": self.pseudonyms, "voters": [v.to_dict() for v in self.voters]}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Roster":
        return cls([Voter.from_dict(v) for v in d["voters"]], bool(d.get("pseudonyms", False)))
