"""Append-only public bulletin board, homomorphic tally and public verification.

The board is a line-delimited JSON log. Line 0 is a header fixing the
election's public parameters, followed by one record per posted ballot and
finally a ``close`` record. Records are never rewritten: a revote appends a
new entry whose ``supersedes`` field names the voter's previous entry, and the
latest entry per identity is the active one.
"""

from __future__ import annotations

import contextlib
import fcntl
import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Iterator, Mapping, Sequence

from . import elgamal, trustees
from .ballot import EncryptedBallot, Receipt, ballot_commitment
from .elgamal import Ciphertext
from .group import validate_params
from .record import ElectionRecord, canonical_json, sha256_hex
from .rng import EntropySource, system_rng
from .trustees import DecryptionShare, InsufficientShares, TrusteeKey


class BoardError(RuntimeError):
    pass


class IneligiblePost(BoardError):
    pass


class InvalidBallot(BoardError):
    pass


class ElectionClosed(BoardError):
    pass


class ElectionOpen(BoardError):
    pass


@dataclass(frozen=True)
class BoardEntry:
    sequence: int
    identity: str
    ballot: EncryptedBallot
    supersedes: int | None = None

    def to_dict(self) -> dict:
        return {
            "type": "ballot",
            "sequence": self.sequence,
            "identity": self.identity,
            "ballot": self.ballot.to_dict(),
            "supersedes": self.supersedes,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "BoardEntry":
        sup = d.get("supersedes")
        return cls(int(d["sequence"]), d["identity"], EncryptedBallot.from_dict(d["ballot"]), None if sup is None else int(sup))


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str = ""

    def __bool__(self) -> bool:
        return self.passed

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "detail": self.detail}


@contextlib.contextmanager
def exclusive_lock(path: Path) -> Iterator[None]:
    """Serialize writers on one board file (advisory lock on a sidecar file)."""
    lock_path = Path(str(path) + ".lock")
    with open(lock_path, "a") as fh:
        fcntl.flock(fh, fcntl.LOCK_EX)
        try:
            yield
        finally:
            fcntl.flock(fh, fcntl.LOCK_UN)


def active_entries(entries: Iterable[BoardEntry]) -> dict[str, BoardEntry]:
    """Latest entry per identity."""
    latest: dict[str, BoardEntry] = {}
    for e in entries:
        latest[e.identity] = e
    return latest


def replay_detectable(record: ElectionRecord) -> bool:
    """Identical ciphertexts signal a copied ballot only when honest collisions are negligible."""
    return record.params.q.bit_length() > 64


class BulletinBoard:
    """Single-writer board; the in-memory lines mirror the file byte for byte."""

    def __init__(self, record: ElectionRecord, path: Path | None = None) -> None:
        self.record = record
        self.path = Path(path) if path is not None else None
        self.header = {"type": "header", **record.header()}
        self.entries: list[BoardEntry] = []
        self.closed = False
        self._lines: list[bytes] = []

    @property
    def election_id(self) -> str:
        return self.record.election_id

    @classmethod
    def create(cls, record: ElectionRecord, path: Path | None = None) -> "BulletinBoard":
        board = cls(record, path)
        if board.path is not None and board.path.exists():
            raise BoardError(f"board file {board.path} already exists")
        board._append(board.header)
        return board

    @classmethod
    def load(cls, record: ElectionRecord, path: Path) -> "BulletinBoard":
        """Load a board written by this class, refusing anything inconsistent with `record`."""
        board = cls(record, path)
        raw = Path(path).read_bytes()
        lines = raw.splitlines(keepends=True)
        if not lines:
            raise BoardError("empty board file")
        header = json.loads(lines[0])
        if header != board.header:
            raise BoardError("board header does not match the election record")
        board._lines.append(lines[0])
        for line in lines[1:]:
            rec = json.loads(line)
            if board.closed:
                raise BoardError("records after close")
            if rec.get("type") == "ballot":
                board.entries.append(BoardEntry.from_dict(rec))
            elif rec.get("type") == "close":
                board.closed = True
            else:
                raise BoardError(f"unknown record type {rec.get('type')!r}")
            board._lines.append(line)
        return board

    def _append(self, rec: dict) -> None:
        line = canonical_json(rec) + b"\n"
        if self.path is not None:
            with open(self.path, "ab") as fh:
                fh.write(line)
                fh.flush()
                os.fsync(fh.fileno())
        self._lines.append(line)

    def serialize(self) -> bytes:
        return b"".join(self._lines)

    def digest(self) -> str:
        """Digest of the header and ballot records (excluding any close record)."""
        return board_digest(self._lines[: 1 + len(self.entries)])

    def active(self) -> dict[str, BoardEntry]:
        return active_entries(self.entries)

    def post(self, identity: str, ballot: EncryptedBallot) -> BoardEntry:
        if self.closed:
            raise ElectionClosed("voting is closed")
        if identity not in self.record.roster:
            raise IneligiblePost(f"{identity!r} is not an eligible identity")
        problems = ballot.problems(self.record)
        if problems:
            raise InvalidBallot("; ".join(problems))
        if replay_detectable(self.record) and any(e.ballot.commitment == ballot.commitment for e in self.entries):
            # copying someone else's ballot would reveal their vote through the tally
            raise InvalidBallot("replayed ballot: identical ciphertexts already on the board")
        prior = self.active().get(identity)
        entry = BoardEntry(
            sequence=len(self.entries) + 1,
            identity=identity,
            ballot=ballot,
            supersedes=prior.sequence if prior else None,
        )
        self._append(entry.to_dict())
        self.entries.append(entry)
        return entry

    def close(self) -> None:
        if self.closed:
            raise ElectionClosed("already closed")
        self._append({"type": "close", "entries": len(self.entries), "digest": self.digest()})
        self.closed = True


def board_digest(lines: Sequence[bytes]) -> str:
    return sha256_hex(b"".join(lines))


@dataclass(frozen=True)
class TallyRecord:
    election: ElectionRecord
    board_digest: str
    active_count: int
    bound: int
    sums: tuple[Ciphertext, ...]
    shares: tuple[tuple[DecryptionShare, ...], ...]
    counts: tuple[int, ...]

    def to_dict(self) -> dict:
        return {
            "election": self.election.to_dict(),
            "board_digest": self.board_digest,
            "active_count": self.active_count,
            "bound": self.bound,
            "sums": [c.to_dict() for c in self.sums],
            "shares": [[s.to_dict() for s in per] for per in self.shares],
            "counts": list(self.counts),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "TallyRecord":
        return cls(
            election=ElectionRecord.from_dict(d["election"]),
            board_digest=d["board_digest"],
            active_count=int(d["active_count"]),
            bound=int(d["bound"]),
            sums=tuple(Ciphertext.from_dict(c) for c in d["sums"]),
            shares=tuple(tuple(DecryptionShare.from_dict(s) for s in per) for per in d["shares"]),
            counts=tuple(int(c) for c in d["counts"]),
        )


def candidate_sums(record: ElectionRecord, entries: Iterable[BoardEntry]) -> tuple[Ciphertext, ...]:
    entries = list(entries)
    return tuple(
        elgamal.homomorphic_sum(record.params, (e.ballot.ciphertexts[i] for e in entries))
        for i in range(record.num_candidates)
    )


ShareProvider = Callable[[Ciphertext], Sequence[DecryptionShare]]


def tally(
    board: BulletinBoard,
    trustee_keys: Sequence[TrusteeKey] | None = None,
    rng: EntropySource | None = None,
    share_provider: ShareProvider | None = None,
) -> TallyRecord:
    """Decrypt the per-candidate sums over active entries with >= k trustees.

    Shares come either from locally available trustee keys or from a
    `share_provider` returning the shares for one ciphertext.
    """
    if not board.closed:
        raise ElectionOpen("tally needs a closed board")
    record = board.record
    params, policy = record.params, record.policy
    rng = rng or system_rng()
    if share_provider is None:
        keys = list(trustee_keys or [])
        if len({k.index for k in keys}) < policy.k:
            raise InsufficientShares(len({k.index for k in keys}), policy.k)
        share_provider = lambda c: [trustees.partial_decrypt(params, c, k, rng) for k in keys]  # noqa: E731

    active = list(board.active().values())
    bound = len(active)
    sums = candidate_sums(record, active)
    all_shares, counts = [], []
    for c in sums:
        shares = tuple(share_provider(c))
        gm = trustees.combine(params, c, shares, record.verification_keys, policy)
        counts.append(elgamal.decode_dlog(params, gm, bound))
        all_shares.append(shares)
    return TallyRecord(record, board.digest(), bound, bound, sums, tuple(all_shares), tuple(counts))


def inclusion_check(entries: Sequence[BoardEntry], election_id: str, receipt: Receipt) -> CheckResult:
    """Is the receipt's ballot on the board, unaltered and still active?"""
    name = f"inclusion:{receipt.identity}"
    if receipt.election_id != election_id:
        return CheckResult(name, False, "receipt is for another election")
    match = next((e for e in entries if e.sequence == receipt.sequence), None)
    if match is None:
        return CheckResult(name, False, f"no entry with sequence {receipt.sequence}")
    if match.identity != receipt.identity:
        return CheckResult(name, False, "entry belongs to another identity")
    if match.ballot.commitment != receipt.commitment:
        return CheckResult(name, False, "commitment differs from receipt")
    if ballot_commitment(match.ballot.ciphertexts) != receipt.commitment:
        return CheckResult(name, False, "posted ciphertexts do not match the receipt commitment")
    if active_entries(entries).get(receipt.identity) is not match:
        return CheckResult(name, False, "superseded")
    return CheckResult(name, True, f"active entry {receipt.sequence}")


def verify_inclusion(board: BulletinBoard, receipt: Receipt) -> CheckResult:
    return inclusion_check(board.entries, board.election_id, receipt)


def non_voter_check(
    entries: Iterable[BoardEntry], roster: Iterable[str], claimed_non_voters: Iterable[str]
) -> list[CheckResult]:
    """For every identity claiming not to have voted, look for any entry under it."""
    entries = list(entries)
    roster = set(roster)
    out = []
    for ident in claimed_non_voters:
        name = f"non-voter:{ident}"
        seqs = [e.sequence for e in entries if e.identity == ident]
        if ident not in roster:
            out.append(CheckResult(name, False, "claimant is not on the roster; inconsistent claim"))
        elif seqs:
            out.append(
                CheckResult(
                    name,
                    False,
                    f"entries {seqs} registered under a claimed non-voter (ballot stuffing or inconsistent claim)",
                )
            )
        else:
            out.append(CheckResult(name, True, "no entry under this identity"))
    return out


def parse_board(lines: Sequence[bytes]) -> tuple[dict | None, list[BoardEntry], dict | None, list[str]]:
    """Lenient parse for verification: returns (header, entries, close, errors)."""
    header, close, entries, errors = None, None, [], []
    for n, line in enumerate(lines):
        try:
            rec = json.loads(line)
            kind = rec.get("type")
            if n == 0:
                if kind != "header":
                    errors.append("first record is not a header")
                header = rec
            elif kind == "ballot":
                if close is not None:
                    errors.append(f"line {n}: ballot after close")
                entries.append(BoardEntry.from_dict(rec))
            elif kind == "close":
                if close is not None:
                    errors.append(f"line {n}: second close record")
                close = rec
            else:
                errors.append(f"line {n}: unknown record type {kind!r}")
        except Exception as exc:  # malformed records become findings
            errors.append(f"line {n}: unparseable ({exc.__class__.__name__}: {exc})")
    return header, entries, close, errors


def _check(name: str, failures: list[str], ok_detail: str = "") -> CheckResult:
    if failures:
        shown = "; ".join(failures[:8]) + (f"; ... ({len(failures)} total)" if len(failures) > 8 else "")
        return CheckResult(name, False, shown)
    return CheckResult(name, True, ok_detail)


def universal_verify(board_bytes: bytes, tally_record: TallyRecord | None, record: ElectionRecord) -> list[CheckResult]:
    """Recheck everything from public data. Failures are results, never exceptions."""
    results: list[CheckResult] = []
    params = record.params
    lines = board_bytes.splitlines(keepends=True)
    header, entries, close, parse_errors = parse_board(lines)
    results.append(_check("board-format", parse_errors))

    results.append(_check("group-params", [] if validate_params(params) else ["group parameters invalid"]))

    expected_header = {"type": "header", **record.header()}
    hdr_fail = []
    if header is None:
        hdr_fail.append("missing header")
    else:
        for key in sorted(set(expected_header) | set(header)):
            if header.get(key) != expected_header.get(key):
                hdr_fail.append(f"header field {key!r} differs from the election record")
    results.append(_check("header-matches-record", hdr_fail))

    seq_fail = [
        f"entry {i + 1} has sequence {e.sequence}" for i, e in enumerate(entries) if e.sequence != i + 1
    ]
    results.append(_check("sequence", seq_fail))

    roster = set(record.roster)
    unexpected = sorted({e.identity for e in entries if e.identity not in roster})
    results.append(
        _check("eligible-identities", [f"unexpected identity {i!r}" for i in unexpected], f"{len(roster)} eligible")
    )

    chain_fail = []
    last: dict[str, int] = {}
    for e in entries:
        if e.supersedes != last.get(e.identity):
            chain_fail.append(f"entry {e.sequence} supersedes {e.supersedes}, expected {last.get(e.identity)}")
        last[e.identity] = e.sequence
    results.append(_check("supersede-chain", chain_fail))

    commit_fail, proof_fail = [], []
    for e in entries:
        try:
            problems = e.ballot.problems(record)
        except Exception as exc:
            problems = [f"unverifiable ({exc.__class__.__name__})"]
        for p in problems:
            (commit_fail if p == "commitment mismatch" else proof_fail).append(f"entry {e.sequence}: {p}")
    results.append(_check("ballot-commitments", commit_fail))
    seen: dict[str, int] = {}
    dup_fail = []
    for e in entries:
        key = ballot_commitment(e.ballot.ciphertexts)
        if key in seen:
            dup_fail.append(f"entry {e.sequence} replays entry {seen[key]}")
        seen.setdefault(key, e.sequence)
    if replay_detectable(record):
        results.append(_check("ballot-uniqueness", dup_fail))
    else:
        results.append(CheckResult("ballot-uniqueness", True, "not enforced: group too small, honest ciphertexts collide"))
    results.append(_check("ballot-proofs", proof_fail, f"{len(entries)} ballots"))

    n_ballot_lines = 1 + len(entries)
    digest_now = board_digest(lines[:n_ballot_lines])
    close_fail = []
    if close is None:
        close_fail.append("board not closed")
    else:
        if close.get("entries") != len(entries):
            close_fail.append("close record entry count differs")
        if close.get("digest") != digest_now:
            close_fail.append("close record digest differs")
    results.append(_check("board-closed", close_fail))

    if tally_record is None:
        results.append(CheckResult("tally-present", False, "no tally record"))
        return results

    t = tally_record
    results.append(
        _check(
            "tally-election-record",
            [] if t.election.to_dict() == record.to_dict() else ["tally embeds a different election record"],
        )
    )
    results.append(
        _check("tally-board-digest", [] if t.board_digest == digest_now else ["tally was computed over another board"])
    )

    active = list(active_entries(entries).values())
    count_fail = []
    if t.active_count != len(active):
        count_fail.append(f"active_count {t.active_count} but board has {len(active)} active entries")
    if t.bound != len(active):
        count_fail.append(f"decode bound {t.bound} but board has {len(active)} active entries")
    if len(t.counts) != record.num_candidates:
        count_fail.append("wrong number of counts")
    count_fail += [f"count {i} = {c} out of range" for i, c in enumerate(t.counts) if not 0 <= c <= len(active)]
    results.append(_check("tally-bounds", count_fail))

    try:
        recomputed = candidate_sums(record, active)
        prod_fail = [] if len(t.sums) == len(recomputed) else ["wrong number of sums"]
        prod_fail += [f"candidate {i}" for i, (x, y) in enumerate(zip(t.sums, recomputed)) if x != y]
    except Exception as exc:
        recomputed = tuple(t.sums)
        prod_fail = [f"cannot recompute ({exc.__class__.__name__})"]
    results.append(_check("homomorphic-products", prod_fail))

    share_fail, threshold_fail, recomb_fail = [], [], []
    for i in range(record.num_candidates):
        if i >= len(recomputed) or i >= len(t.shares) or i >= len(t.counts):
            recomb_fail.append(f"candidate {i}: missing data")
            continue
        c, shares = recomputed[i], list(t.shares[i])
        indices = [s.index for s in shares]
        if len(set(indices)) != len(indices) or len(indices) < record.policy.k:
            threshold_fail.append(f"candidate {i}: trustees {indices} do not meet k={record.policy.k}")
        try:
            bad = trustees.invalid_shares(params, c, shares, record.verification_keys)
        except Exception as exc:
            bad = [f"? ({exc.__class__.__name__})"]
        share_fail += [f"candidate {i}: trustee {b}" for b in bad]
        try:
            gm = params.div(c.b, trustees.recombine(params, shares))
            if gm != params.gexp(t.counts[i]) or not 0 <= t.counts[i] <= t.bound:
                recomb_fail.append(f"candidate {i}: shares do not decrypt to count {t.counts[i]}")
        except Exception as exc:
            recomb_fail.append(f"candidate {i}: recombination impossible ({exc.__class__.__name__})")
    results.append(_check("share-threshold", threshold_fail))
    results.append(_check("share-proofs", share_fail))
    results.append(_check("recombination", recomb_fail, "counts " + ",".join(map(str, t.counts))))
    return results
