"""Election lifecycle on disk: setup, vote, close, tally, verify, fraud demos.

All state lives in one election directory::

    config.json          the configuration as given
    election.json        public election record (group, keys, roster, policy)
    roster.json          credential digests and pseudonyms (officials only)
    board.jsonl          the bulletin board
    trustees/            one key file per trustee
    audits/ receipts/ exports/
    tally.json           tally record, self-contained for re-verification
    verification.json / verification.txt
"""

from __future__ import annotations

import json
import shutil
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from . import elgamal, trustees
from .ballot import (
    AuditPackage,
    BallotPlain,
    BallotPreparationSystem,
    Receipt,
    authenticate_and_cast,
    seal,
)
from .board import (
    BoardEntry,
    BulletinBoard,
    CheckResult,
    TallyRecord,
    active_entries,
    board_digest,
    exclusive_lock,
    inclusion_check,
    non_voter_check,
    parse_board,
    tally,
    universal_verify,
)
from .group import GroupParams, group_from_config
from .record import ElectionRecord, canonical_json
from .rng import EntropySource, SeededRng, system_rng
from .roster import Roster, Voter
from .sharing import SharingError, SharingPolicy, reconstruct
from .trustees import TrusteeKey


class ConfigError(ValueError):
    def __init__(self, problems: Sequence[str]) -> None:
        self.problems = list(problems)
        super().__init__("invalid config: " + "; ".join(self.problems))


class StateError(RuntimeError):
    pass


THRESHOLD_NOTE = (
    "Counting integrity and ballot privacy rest on fewer than k of the n trustees "
    "colluding; any k trustees together can decrypt individual ballots."
)
DEALER_NOTE = "Keys were issued by a trusted dealer that discarded the election secret after setup."


@dataclass(frozen=True)
class ElectionConfig:
    election_id: str
    candidates: tuple[str, ...]
    max_selections: int
    voters: tuple[Voter, ...]
    policy: SharingPolicy
    group: str | Mapping[str, str] = "toy"
    pseudonyms: bool = False

    @classmethod
    def from_dict(cls, d: Mapping) -> "ElectionConfig":
        problems = []
        eid = d.get("election_id")
        if not isinstance(eid, str) or not eid:
            problems.append("election_id: must be a non-empty string")
        candidates = d.get("candidates")
        if not isinstance(candidates, list) or not candidates:
            problems.append("candidates: need at least one candidate")
            candidates = []
        elif len(set(candidates)) != len(candidates):
            problems.append("candidates: names must be unique")
        max_sel = d.get("max_selections", 1)
        if not isinstance(max_sel, int) or not 1 <= max_sel <= max(len(candidates), 1):
            problems.append(f"max_selections: must be an integer in [1, {max(len(candidates), 1)}]")
        voters: list[Voter] = []
        raw_roster = d.get("roster")
        if not isinstance(raw_roster, list) or not raw_roster:
            problems.append("roster: need at least one voter")
        else:
            for i, v in enumerate(raw_roster):
                try:
                    voters.append(Voter.from_dict(v))
                except (KeyError, ValueError, TypeError) as exc:
                    problems.append(f"roster[{i}]: {exc}")
            names = [v.identity for v in voters]
            if len(set(names)) != len(names):
                problems.append("roster: identities must be unique")
        policy = None
        try:
            t = d.get("trustees", {})
            policy = SharingPolicy(int(t.get("k", 1)), int(t.get("n", 1)))
        except (SharingError, TypeError, ValueError, AttributeError) as exc:
            problems.append(f"trustees: {exc}")
        group = d.get("group", "toy")
        try:
            group_from_config(group)
        except (ValueError, KeyError, TypeError) as exc:
            problems.append(f"group: {exc}")
        if problems:
            raise ConfigError(problems)
        return cls(eid, tuple(candidates), max_sel, tuple(voters), policy, group, bool(d.get("pseudonyms", False)))

    @property
    def params(self) -> GroupParams:
        return group_from_config(self.group)


@dataclass
class ElectionDir:
    root: Path

    def __post_init__(self) -> None:
        self.root = Path(self.root)

    config = property(lambda self: self.root / "config.json")
    record = property(lambda self: self.root / "election.json")
    roster = property(lambda self: self.root / "roster.json")
    board = property(lambda self: self.root / "board.jsonl")
    trustees = property(lambda self: self.root / "trustees")
    audits = property(lambda self: self.root / "audits")
    receipts = property(lambda self: self.root / "receipts")
    exports = property(lambda self: self.root / "exports")
    tally = property(lambda self: self.root / "tally.json")
    report_json = property(lambda self: self.root / "verification.json")
    report_text = property(lambda self: self.root / "verification.txt")

    def trustee_file(self, index: int) -> Path:
        return self.trustees / f"trustee-{index}.json"

    def load_record(self) -> ElectionRecord:
        if not self.record.exists():
            raise StateError(f"{self.root} holds no election (run setup first)")
        return ElectionRecord.from_dict(json.loads(self.record.read_text()))

    def load_roster(self) -> Roster:
        return Roster.from_dict(json.loads(self.roster.read_text()))

    def load_board(self, record: ElectionRecord | None = None) -> BulletinBoard:
        return BulletinBoard.load(record or self.load_record(), self.board)


def _write_json(path: Path, obj: object) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def command_rng(seed: object | None, *labels: object) -> EntropySource:
    """Seeded stream per command when --seed is given, system entropy otherwise."""
    return SeededRng(seed, *labels) if seed is not None else system_rng()


def _pseudonym(public_seed: str, identity: str) -> str:
    return "V-" + SeededRng(public_seed, "pseudonym", identity).randbytes(6).hex()


# -- setup -----------------------------------------------------------------------


def setup(config: ElectionConfig, election_dir: Path, seed: object | None = None, raw_config: Mapping | None = None) -> ElectionRecord:
    paths = ElectionDir(election_dir)
    if paths.record.exists() or paths.board.exists():
        raise StateError(f"{paths.root} already holds an election; refusing to overwrite")
    params = config.params
    secret_rng = command_rng(seed, "setup", "secret")
    # only non-secret choices (pseudonym assignment) derive from the public seed
    public_seed = SeededRng(seed, "setup", "public").randbytes(16).hex() if seed is not None else system_rng().randbytes(16).hex()

    voters = config.voters
    if config.pseudonyms:
        voters = tuple(Voter(v.identity, v.credential_digest, _pseudonym(public_seed, v.identity), v.eligible) for v in voters)
    roster = Roster(voters, config.pseudonyms)

    public, keys = trustees.dealer_keygen(params, config.policy, secret_rng)
    record = ElectionRecord(
        election_id=config.election_id,
        candidates=config.candidates,
        max_selections=config.max_selections,
        params=params,
        h=public.h,
        policy=config.policy,
        verification_keys=public.verification_keys,
        roster=roster.public_identities(),
        pseudonyms=config.pseudonyms,
        notes={
            "public_seed": public_seed,
            "seeded": seed is not None,
            "trust": [DEALER_NOTE, THRESHOLD_NOTE],
        },
    )
    paths.root.mkdir(parents=True, exist_ok=True)
    for key in keys:
        paths.trustees.mkdir(exist_ok=True)
        key.save(paths.trustee_file(key.index))
    stored = dict(raw_config) if raw_config is not None else {"election_id": config.election_id}
    stored["roster"] = [v.to_dict() for v in config.voters]  # digests, never plaintext credentials
    _write_json(paths.config, stored)
    _write_json(paths.roster, roster.to_dict())
    _write_json(paths.record, record.to_dict())
    BulletinBoard.create(record, paths.board)
    return record


# -- voting ----------------------------------------------------------------------

Prompt = Callable[[str], str]


@dataclass
class VoteOutcome:
    receipt: Receipt
    audits: list[tuple[bool, AuditPackage]] = field(default_factory=list)
    export_path: Path | None = None


def cast_vote(
    election_dir: Path,
    credential: str,
    choices: Sequence[int],
    audits: int = 0,
    seed: object | None = None,
    prompt: Prompt | None = None,
    coerce_destination: str | None = None,
    bps_factory: Callable[[ElectionRecord, EntropySource], BallotPreparationSystem] = BallotPreparationSystem,
    echo: Callable[[str], None] = lambda s: None,
) -> VoteOutcome:
    """Prepare, optionally audit (scripted count or interactive), seal and cast."""
    paths = ElectionDir(election_dir)
    record = paths.load_record()
    roster = paths.load_roster()
    with exclusive_lock(paths.board):
        board = paths.load_board(record)
        if board.closed:
            raise StateError("voting is closed")
        rng = command_rng(seed, "vote", credential, len(board.entries))
        bps = bps_factory(record, rng)
        intended = BallotPlain(record.election_id, tuple(choices))
        pb = bps.prepare(intended)
        outcome_audits: list[tuple[bool, AuditPackage]] = []
        tag = f"{len(board.entries) + 1:05d}"

        def do_audit() -> None:
            nonlocal pb
            verdict, pb, package = bps.audit(pb, intended)
            outcome_audits.append((verdict, package))
            _write_json(paths.audits / f"audit-{tag}-{len(outcome_audits)}.json", {"verdict": verdict, **package.to_dict()})
            echo(f"audit {len(outcome_audits)}: {'consistent' if verdict else 'MISMATCH'} (commitment {package.commitment[:16]}...)")
            if not verdict:
                raise StateError("audit failed: the ballot preparation system did not encrypt the intended choices")

        if prompt is None:
            for _ in range(audits):
                do_audit()
        else:
            while True:
                echo(f"ballot prepared, commitment {pb.commitment}")
                answer = prompt("audit or seal? [a/s] ").strip().lower()
                if answer in ("a", "audit"):
                    do_audit()
                elif answer in ("s", "seal"):
                    break

        export_path = None
        if coerce_destination is not None:
            export_path = paths.exports / f"coerce-{tag}.json"
            export_path.parent.mkdir(parents=True, exist_ok=True)
            bps.coerce_export(pb, coerce_destination, export_path)
        sealed = seal(pb)
        receipt = authenticate_and_cast(sealed, credential, board, roster)
    _write_json(paths.receipts / f"receipt-{receipt.sequence:05d}.json", receipt.to_dict())
    return VoteOutcome(receipt, outcome_audits, export_path)


def close(election_dir: Path) -> None:
    paths = ElectionDir(election_dir)
    with exclusive_lock(paths.board):
        board = paths.load_board()
        if board.closed:
            raise StateError("election already closed")
        board.close()


# -- tally -----------------------------------------------------------------------


def load_trustee_files(files: Iterable[Path]) -> list[TrusteeKey]:
    keys = {}
    for f in files:
        key = TrusteeKey.load(Path(f))
        keys[key.index] = key
    return [keys[i] for i in sorted(keys)]


def run_tally(election_dir: Path, trustee_files: Iterable[Path], seed: object | None = None) -> TallyRecord:
    paths = ElectionDir(election_dir)
    board = paths.load_board()
    if not board.closed:
        raise StateError("tally before close: run close first")
    keys = load_trustee_files(trustee_files)
    if len(keys) < board.record.policy.k:
        raise trustees.InsufficientShares(len(keys), board.record.policy.k)
    result = tally(board, keys, command_rng(seed, "tally"))
    _write_json(paths.tally, result.to_dict())
    return result


# -- verification ------------------------------------------------------------------

SCORECARD_CHECKS = {
    "Uniqueness": ("sequence", "supersede-chain"),
    "Eligibility": ("eligible-identities", "non-voter"),
    "Integrity": (
        "board-format",
        "header-matches-record",
        "ballot-commitments",
        "ballot-uniqueness",
        "ballot-proofs",
        "board-closed",
        "tally-election-record",
        "tally-board-digest",
        "tally-bounds",
        "homomorphic-products",
        "share-threshold",
        "share-proofs",
        "recombination",
    ),
}


@dataclass
class VerificationReport:
    checks: list[CheckResult]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failed(self) -> list[CheckResult]:
        return [c for c in self.checks if not c.passed]

    def scorecard(self) -> dict[str, dict]:
        def status(prefixes: Iterable[str]) -> str:
            relevant = [c for c in self.checks if any(c.name == p or c.name.startswith(p + ":") for p in prefixes)]
            if not relevant:
                return "NOT CHECKED"
            return "SATISFIED" if all(c.passed for c in relevant) else "VIOLATED"

        card = {name: {"status": status(prefixes)} for name, prefixes in SCORECARD_CHECKS.items()}
        card["Verifiability"] = {
            "status": "SATISFIED" if self.passed else "VIOLATED",
            "note": "every public check recomputed from the board and tally record",
        }
        card["Coercion resistance"] = {
            "status": "NOT PROVIDED (by design)",
            "note": "ballots can be exported with their randomness and plaintext on request",
        }
        card["Integrity"]["note"] = THRESHOLD_NOTE
        return card

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "checks": [c.to_dict() for c in self.checks],
            "scorecard": self.scorecard(),
        }

    def to_text(self) -> str:
        lines = [f"verification: {'PASS' if self.passed else 'FAIL'}", ""]
        for c in self.checks:
            lines.append(f"  [{'ok' if c.passed else 'FAIL'}] {c.name}" + (f": {c.detail}" if c.detail else ""))
        lines += ["", "requirements scorecard:"]
        for name, entry in self.scorecard().items():
            lines.append(f"  {name:<20} {entry['status']}" + (f"  ({entry['note']})" if "note" in entry else ""))
        return "\n".join(lines) + "\n"


def verify(
    election_dir: Path,
    receipts: Iterable[Receipt] = (),
    non_voters: Iterable[str] = (),
    write: bool = True,
) -> VerificationReport:
    """Run every public check; nothing here needs secrets."""
    paths = ElectionDir(election_dir)
    record = paths.load_record()
    board_bytes = paths.board.read_bytes() if paths.board.exists() else b""
    checks: list[CheckResult] = []
    tally_record = None
    if paths.tally.exists():
        try:
            tally_record = TallyRecord.from_dict(json.loads(paths.tally.read_text()))
        except Exception as exc:
            checks.append(CheckResult("tally-format", False, f"unparseable tally record ({exc.__class__.__name__})"))
    checks = universal_verify(board_bytes, tally_record, record) + checks

    _, entries, _, _ = parse_board(board_bytes.splitlines(keepends=True))
    for r in receipts:
        checks.append(inclusion_check(entries, record.election_id, r))
    non_voters = list(non_voters)
    if non_voters:
        names = list(non_voters)
        if record.pseudonyms and paths.roster.exists():
            roster = paths.load_roster()
            names = [roster.board_identity(n) if n in roster else n for n in names]
        checks += non_voter_check(entries, record.roster, names)
    report = VerificationReport(checks)
    if write:
        _write_json(paths.report_json, report.to_dict())
        paths.report_text.write_text(report.to_text())
    return report


# -- fraud demonstrations --------------------------------------------------------------

SCENARIOS = ("stuff", "swap", "miscount")


@dataclass
class FraudOutcome:
    scenario: str
    description: str
    report: VerificationReport
    detected_by: list[str]
    note: str = ""

    @property
    def detected(self) -> bool:
        return bool(self.detected_by)

    def to_text(self) -> str:
        verdict = f"DETECTED by {', '.join(self.detected_by)}" if self.detected else "NOT DETECTED"
        text = f"[{self.scenario}] {self.description}\n  -> {verdict}"
        return text + (f"\n  note: {self.note}" if self.note else "")


def _rewrite_board(path: Path, header_line: bytes, entries: Sequence[BoardEntry]) -> None:
    """Malicious-authority rewrite: a consistent board ending in a fresh close record."""
    lines = [header_line] + [canonical_json(e.to_dict()) + b"\n" for e in entries]
    close_rec = {"type": "close", "entries": len(entries), "digest": board_digest(lines)}
    path.write_bytes(b"".join(lines) + canonical_json(close_rec) + b"\n")


def _insider_secret(paths: ElectionDir, record: ElectionRecord) -> int:
    keys = load_trustee_files(sorted(paths.trustees.glob("trustee-*.json")))
    return reconstruct(trustees.to_share_points(keys[: record.policy.k]), record.params.q)


def _forged_ballot(record: ElectionRecord, choices: Sequence[int], rng: EntropySource):
    bps = BallotPreparationSystem(record, rng)
    return bps.prepare(BallotPlain(record.election_id, tuple(choices))).encrypted


def _copy(election_dir: Path, workdir: Path | None, name: str) -> Path:
    base = Path(workdir) if workdir is not None else Path(tempfile.mkdtemp(prefix="evote-fraud-"))
    dest = base / name
    if dest.exists():
        shutil.rmtree(dest)
    shutil.copytree(election_dir, dest)
    return dest


def load_receipts(election_dir: Path) -> list[Receipt]:
    """Each voter's latest receipt; earlier ones were superseded by a revote."""
    latest: dict[str, Receipt] = {}
    for p in sorted(ElectionDir(election_dir).receipts.glob("*.json")):
        r = Receipt.from_dict(json.loads(p.read_text()))
        if r.identity not in latest or r.sequence > latest[r.identity].sequence:
            latest[r.identity] = r
    return list(latest.values())


def demo_fraud(election_dir: Path, scenario: str, workdir: Path | None = None, seed: object | None = "demo") -> list[FraudOutcome]:
    """Apply a manipulation to a copy of a completed election and re-verify."""
    if scenario not in SCENARIOS:
        raise ValueError(f"unknown scenario {scenario!r}; choose from {', '.join(SCENARIOS)}")
    src = ElectionDir(election_dir)
    if not src.tally.exists():
        raise StateError("demo-fraud needs a tallied election")
    rng = command_rng(seed, "demo-fraud", scenario)
    record = src.load_record()
    outcomes = []

    def outcome(name: str, description: str, paths: ElectionDir, non_voters=(), note="") -> FraudOutcome:
        report = verify(paths.root, load_receipts(paths.root), non_voters, write=True)
        caught = [c.name for c in report.failed()]
        return FraudOutcome(name, description, report, caught, note)

    if scenario == "miscount":
        paths = ElectionDir(_copy(election_dir, workdir, "miscount"))
        doc = json.loads(paths.tally.read_text())
        doc["counts"][0] += 1
        _write_json(paths.tally, doc)
        outcomes.append(outcome("miscount", f"published count for {record.candidates[0]!r} raised by one", paths))

    elif scenario == "swap":
        paths = ElectionDir(_copy(election_dir, workdir, "swap"))
        lines = paths.board.read_bytes().splitlines(keepends=True)
        _, entries, _, _ = parse_board(lines)
        active = active_entries(entries)
        if not active:
            raise StateError("no ballots to swap")
        victim = next(iter(active.values()))
        x = _insider_secret(paths, record)
        plain = [elgamal.decrypt(record.params, c, x, 1) for c in victim.ballot.ciphertexts]
        others = [i for i in range(record.num_candidates) if plain[i] == 0] or [None]
        target = [0] * record.num_candidates
        if others[0] is not None:
            target[others[0]] = 1
        forged = _forged_ballot(record, target, rng)
        entries = [BoardEntry(e.sequence, e.identity, forged, e.supersedes) if e is victim else e for e in entries]
        _rewrite_board(paths.board, lines[0], entries)
        outcomes.append(
            outcome("swap", f"ballot of {victim.identity!r} replaced with a valid ballot for another choice", paths)
        )

    elif scenario == "stuff":
        # (a) identity that is not on the roster
        paths = ElectionDir(_copy(election_dir, workdir, "stuff-unknown"))
        lines = paths.board.read_bytes().splitlines(keepends=True)
        _, entries, _, _ = parse_board(lines)
        ghost = "ghost-voter"
        while ghost in record.roster:
            ghost += "-x"
        choice = [1] + [0] * (record.num_candidates - 1)
        entries.append(BoardEntry(len(entries) + 1, ghost, _forged_ballot(record, choice, rng), None))
        _rewrite_board(paths.board, lines[0], entries)
        _retally(paths, rng)
        outcomes.append(outcome("stuff", f"vote inserted for non-existent voter {ghost!r}, tally redone", paths))

        # (b) eligible voter who did not vote
        voted = {e.identity for e in parse_board(src.board.read_bytes().splitlines(keepends=True))[1]}
        absent = [i for i in record.roster if i not in voted]
        if not absent:
            outcomes.append(
                FraudOutcome(
                    "stuff",
                    "vote inserted under an eligible non-voter",
                    VerificationReport([]),
                    [],
                    "not demonstrable: every eligible voter voted. Detecting this manipulation "
                    "requires non-voters to check the board for their own name.",
                )
            )
        else:
            paths = ElectionDir(_copy(election_dir, workdir, "stuff-nonvoter"))
            lines = paths.board.read_bytes().splitlines(keepends=True)
            _, entries, _, _ = parse_board(lines)
            entries.append(BoardEntry(len(entries) + 1, absent[0], _forged_ballot(record, choice, rng), None))
            _rewrite_board(paths.board, lines[0], entries)
            _retally(paths, rng)
            o = outcome(
                "stuff",
                f"vote inserted under eligible non-voter {absent[0]!r}, tally redone",
                paths,
                non_voters=[absent[0]],
            )
            universal = [n for n in o.detected_by if not n.startswith("non-voter:")]
            o.note = (
                "caught only by the non-voter check; universal verification alone passes"
                if not universal
                else f"also caught by {', '.join(universal)}"
            )
            outcomes.append(o)
    return outcomes


def _retally(paths: ElectionDir, rng: EntropySource) -> None:
    board = paths.load_board()
    keys = load_trustee_files(sorted(paths.trustees.glob("trustee-*.json")))
    _write_json(paths.tally, tally(board, keys, rng).to_dict())
