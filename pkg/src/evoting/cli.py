"""Command-line driver: ``evote <command> ...``.

Exit codes: 0 success, 1 verification failure, 2 usage error, 3 state error.
"""

from __future__ import annotations

import argparse
import json
import logging
import random
import sys
import warnings
from pathlib import Path
from typing import Sequence

from . import election as E
from .ballot import BallotError, BallotStateError, CoercionWarning, Receipt
from .board import BoardError
from .roster import AuthenticationError
from .sharing import SharingError
from .trustees import InsufficientShares, InvalidShareProof

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_STATE = 0, 1, 2, 3

log = logging.getLogger("evote")


class UsageError(ValueError):
    pass


def _out(text: str = "") -> None:
    print(text, flush=True)


def _seed(args: argparse.Namespace):
    return args.seed


# -- election commands -------------------------------------------------------------


def cmd_setup(args: argparse.Namespace) -> int:
    try:
        raw = json.loads(Path(args.config).read_text())
    except FileNotFoundError:
        raise UsageError(f"config file {args.config} not found")
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file is not JSON: {exc}")
    if args.group:
        raw["group"] = args.group
    if args.pseudonyms:
        raw["pseudonyms"] = True
    config = E.ElectionConfig.from_dict(raw)
    record = E.setup(config, Path(args.election_dir), _seed(args), raw)
    _out(f"election {record.election_id!r} set up in {args.election_dir}")
    _out(f"  group {record.params.name} ({record.params.p.bit_length()}-bit p), {record.num_candidates} candidates")
    _out(f"  trustees: {record.policy.k}-of-{record.policy.n}, key files in {E.ElectionDir(args.election_dir).trustees}")
    return EXIT_OK


def _choices(args: argparse.Namespace, candidates: Sequence[str]) -> list[int]:
    if args.choices is not None and args.choice:
        raise UsageError("give either --choices or --choice, not both")
    if args.choices is not None:
        try:
            vec = [int(x) for x in args.choices.split(",")] if args.choices else []
        except ValueError:
            raise UsageError("--choices must be a comma-separated 0/1 vector")
        return vec
    vec = [0] * len(candidates)
    for name in args.choice or []:
        if name not in candidates:
            raise UsageError(f"unknown candidate {name!r}; candidates are {', '.join(candidates)}")
        vec[candidates.index(name)] = 1
    return vec


def cmd_vote(args: argparse.Namespace) -> int:
    paths = E.ElectionDir(args.election_dir)
    record = paths.load_record()
    choices = _choices(args, record.candidates)
    prompt = input if args.interactive else None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CoercionWarning)  # surfaced on stderr below
        outcome = E.cast_vote(
            paths.root,
            args.credential,
            choices,
            audits=args.audit,
            seed=_seed(args),
            prompt=prompt,
            coerce_destination=args.coerce_me,
            echo=_out,
        )
    if outcome.export_path is not None:
        print(f"WARNING: coercion export written to {outcome.export_path}. Coercion resistance is NOT provided.", file=sys.stderr)
    r = outcome.receipt
    _out(f"cast: sequence {r.sequence}, identity {r.identity}, commitment {r.commitment}")
    _out(f"receipt: {paths.receipts / f'receipt-{r.sequence:05d}.json'}")
    return EXIT_OK


def cmd_close(args: argparse.Namespace) -> int:
    E.close(Path(args.election_dir))
    _out("voting closed")
    return EXIT_OK


def cmd_tally(args: argparse.Namespace) -> int:
    result = E.run_tally(Path(args.election_dir), [Path(f) for f in args.trustee_file or []], _seed(args))
    _out(f"tally over {result.active_count} active ballots")
    for name, count in zip(result.election.candidates, result.counts):
        _out(f"  {name}: {count}")
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    receipts = [Receipt.from_dict(json.loads(Path(f).read_text())) for f in args.receipt or []]
    if args.all_receipts:
        receipts += E.load_receipts(Path(args.election_dir))
    report = E.verify(Path(args.election_dir), receipts, args.non_voter or [])
    _out(report.to_text().rstrip())
    return EXIT_OK if report.passed else EXIT_VERIFY


def cmd_demo_fraud(args: argparse.Namespace) -> int:
    outcomes = E.demo_fraud(Path(args.election_dir), args.scenario, Path(args.workdir) if args.workdir else None)
    silent = False
    for o in outcomes:
        _out(o.to_text())
        silent |= not o.detected and not o.note
    return EXIT_VERIFY if silent else EXIT_OK


# -- RIES commands ---------------------------------------------------------------------


def _ries_dir(path: str) -> Path:
    d = Path(path)
    if not (d / "params.json").exists():
        raise E.StateError(f"{d} holds no simulation (run 'evote ries simulate' first)")
    return d


def cmd_ries_simulate(args: argparse.Namespace) -> int:
    from .ries import RiesParams, simulate_election, table_to_csv

    rng = random.Random(args.seed)
    out = Path(args.out)
    if (out / "params.json").exists():
        raise E.StateError(f"{out} already holds a simulation; refusing to overwrite")
    params = RiesParams(
        master_key=rng.getrandbits(args.key_bits),
        election_id=args.election_id,
        key_bits=args.key_bits,
        candidates=tuple(args.candidates.split(",")),
    )
    sim = simulate_election(params, args.voters, args.turnout, rng)
    out.mkdir(parents=True, exist_ok=True)
    (out / "params.json").write_text(json.dumps(params.to_dict(), indent=2) + "\n")
    (out / "registry.csv").write_text(table_to_csv(((v.vnid, str(v.birthyear)) for v in sim.voters), ("vnid", "birthyear")))
    (out / "reference.csv").write_text(table_to_csv(sim.reference, ("pseudo_id", "code_sha256")))
    (out / "published.csv").write_text(table_to_csv(sim.published, ("pseudo_id", "rnpid")))
    (out / "truth.json").write_text(json.dumps(sim.truth(), indent=2, sort_keys=True) + "\n")
    _out(f"simulated {args.voters} voters, {len(sim.published)} votes cast, {args.key_bits}-bit keys -> {out}")
    return EXIT_OK


def cmd_ries_forge(args: argparse.Namespace) -> int:
    from collections import Counter

    from .ries import RiesParams, forge_vote_code, simulate_election, table_from_csv
    from .ries.attacks import HISTORICAL_2008_PC_SECONDS, benchmark_des

    if args.simulation:
        d = _ries_dir(args.simulation)
        params = RiesParams.from_dict(json.loads((d / "params.json").read_text()))
        reference = table_from_csv((d / "reference.csv").read_text())
        years = [int(y) for _, y in table_from_csv((d / "registry.csv").read_text())]
    else:
        rng = random.Random(args.seed)
        params = RiesParams(rng.getrandbits(args.key_bits), "forge-demo", key_bits=args.key_bits)
        sim = simulate_election(params, args.voters, 0.7, rng)
        reference = sim.reference
        years = [v.birthyear for v in sim.voters]
    if args.key_bits != params.key_bits:
        raise UsageError(f"simulation uses {params.key_bits}-bit keys, not {args.key_bits}")
    birthyear = args.birthyear or Counter(years).most_common(1)[0][0]
    res = forge_vote_code(
        params.election_id,
        params.candidates,
        reference,
        args.key_bits,
        choice=args.choice,
        birthyear=birthyear,
        budget=args.budget,
        workers=args.workers,
    )
    _out(f"key width {res.key_bits} bits, message ({args.choice or params.candidates[0]}, {birthyear})")
    if res.found:
        _out(f"FORGED: key {res.key:#x} gives a valid code of pseudo-identity {res.pseudo_id}")
        _out(f"  rnpid {res.code.rnpid.hex()}")
    else:
        _out("no valid code found" + (" (budget exhausted)" if res.budget_exhausted else ""))
    _out(f"  {res.trials} MAC evaluations in {res.elapsed:.2f} s ({res.throughput:,.0f}/s), {res.coverage:.1%} of the key space")
    ex = res.extrapolate(2.0**36)
    _out(
        f"extrapolation to 2^36 keys at this rate: {ex['hours']:.1f} h "
        f"({ex['ratio_to_2008_pc']:.2f}x the historical {HISTORICAL_2008_PC_SECONDS // 3600} h PC estimate; order of magnitude only)"
    )
    des_rate = benchmark_des(0.3) if args.des_benchmark else None
    if des_rate:
        _out(f"real single-DES CBC-MAC rate here: {des_rate:,.0f}/s -> 2^36 keys in {2**36 / des_rate / 3600:.0f} h")
    return EXIT_OK if res.found else EXIT_VERIFY


def cmd_ries_registry_attack(args: argparse.Namespace) -> int:
    from .ries import RiesElection, RiesParams, RiesVoter, registry_attack, score_registry_attack, table_from_csv

    d = _ries_dir(args.simulation)
    params = RiesParams.from_dict(json.loads((d / "params.json").read_text()))
    registry = table_from_csv((d / "registry.csv").read_text())
    vnids = [v for v, _ in registry] + list(args.extra_vnid or [])
    findings = registry_attack(
        params,
        vnids,
        table_from_csv((d / "reference.csv").read_text()),
        table_from_csv((d / "published.csv").read_text()),
    )
    _out("vnid,status,pseudo_id,birthyear")
    for f in findings:
        _out(f"{f.vnid},{f.status},{f.pseudo_id or ''},{f.birthyear or ''}")
    truth_path = d / "truth.json"
    if truth_path.exists():
        truth = json.loads(truth_path.read_text())
        voters = [RiesVoter(v, t["birthyear"], t["pseudo_id"]) for v, t in truth.items()]
        sim = RiesElection(params, voters, {v: t["vote"] for v, t in truth.items()})
        score = score_registry_attack(findings, sim)
        _out(f"# against ground truth: {score['attributed']}/{score['cast']} votes attributed, {len(score['errors'])} errors")
        for e in score["errors"]:
            _out(f"#   {e}")
        return EXIT_OK if not score["errors"] else EXIT_VERIFY
    return EXIT_OK


def cmd_ries_sms_attack(args: argparse.Namespace) -> int:
    from .ries import SmsLoginServer, sms_token_attack

    rng = random.Random(args.seed)
    width = 2 * args.window + 1
    _out("run,true_ms,window_lo,window_hi,hit,guesses")
    misses = 0
    for run in range(args.runs):
        true_ms = 1_200_000_000_000 + rng.randrange(10**9)
        observed = true_ms + rng.randint(-args.window, args.window)
        server = SmsLoginServer(true_ms)
        res = sms_token_attack((observed - args.window, observed + args.window), server.check)
        misses += not res.hit or res.guesses > width
        _out(f"{run},{true_ms},{observed - args.window},{observed + args.window},{int(res.hit)},{res.guesses}")
    _out(f"# {args.runs - misses}/{args.runs} tokens recovered within {width} guesses")
    return EXIT_OK if misses == 0 else EXIT_VERIFY


# -- parser ------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", help="derive all randomness from this seed (reproducible, testing only)")
    edir = argparse.ArgumentParser(add_help=False)
    edir.add_argument("--election-dir", required=True)

    p = argparse.ArgumentParser(prog="evote", description="Verifiable voting prototype and RIES attack demos.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("setup", parents=[common, edir], help="create an election directory")
    s.add_argument("--config", required=True, help="election config JSON")
    s.add_argument("--group", help="toy or modp2048 (overrides the config)", choices=["toy", "modp2048"])
    s.add_argument("--pseudonyms", action="store_true", help="post ballots under pseudonyms")
    s.set_defaults(func=cmd_setup)

    s = sub.add_parser("vote", parents=[common, edir], help="prepare, audit, seal and cast a ballot")
    s.add_argument("--credential", required=True)
    s.add_argument("--choice", action="append", help="candidate name (repeatable)")
    s.add_argument("--choices", help="comma-separated 0/1 vector, one entry per candidate")
    s.add_argument("--audit", type=int, default=0, metavar="N", help="audit N times before sealing")
    s.add_argument("--interactive", action="store_true", help="prompt audit/seal each round")
    s.add_argument("--coerce-me", metavar="DEST", help="export the opened ballot for a third party (UNSAFE)")
    s.set_defaults(func=cmd_vote)

    s = sub.add_parser("close", parents=[common, edir], help="close voting")
    s.set_defaults(func=cmd_close)

    s = sub.add_parser("tally", parents=[common, edir], help="decrypt the tally with k trustees")
    s.add_argument("--trustee-file", action="append", help="trustee key file (repeatable)")
    s.set_defaults(func=cmd_tally)

    s = sub.add_parser("verify", parents=[common, edir], help="run every public check")
    s.add_argument("--receipt", action="append", help="receipt file to check for inclusion (repeatable)")
    s.add_argument("--all-receipts", action="store_true", help="check every receipt in the election directory")
    s.add_argument("--non-voter", action="append", help="identity claiming not to have voted (repeatable)")
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("demo-fraud", parents=[common, edir], help="tamper with a copy and re-verify")
    s.add_argument("--scenario", required=True, choices=E.SCENARIOS)
    s.add_argument("--workdir", help="where to put the tampered copies (default: a temp dir)")
    s.set_defaults(func=cmd_demo_fraud)

    ries = sub.add_parser("ries", help="RIES weakness demonstrations").add_subparsers(dest="ries_command", required=True)
    s = ries.add_parser("simulate", parents=[common], help="simulate a RIES election")
    s.add_argument("--out", required=True)
    s.add_argument("--voters", type=int, default=50)
    s.add_argument("--turnout", type=float, default=0.7)
    s.add_argument("--key-bits", type=int, default=20)
    s.add_argument("--election-id", default="GR2008")
    s.add_argument("--candidates", default="A,B,C")
    s.set_defaults(func=cmd_ries_simulate)

    s = ries.add_parser("forge", parents=[common], help="brute-force a valid vote code")
    s.add_argument("--key-bits", type=int, required=True)
    s.add_argument("--simulation", help="simulation directory (default: simulate --voters in memory)")
    s.add_argument("--voters", type=int, default=1000)
    s.add_argument("--choice")
    s.add_argument("--birthyear", type=int)
    s.add_argument("--budget", type=int)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--des-benchmark", action="store_true", help="also time real DES CBC-MAC")
    s.set_defaults(func=cmd_ries_forge)

    s = ries.add_parser("registry-attack", parents=[common], help="attribute votes with the master key")
    s.add_argument("--simulation", required=True)
    s.add_argument("--extra-vnid", action="append", help="additional VnID to probe (repeatable)")
    s.set_defaults(func=cmd_ries_registry_attack)

    s = ries.add_parser("sms-attack", parents=[common], help="recover millisecond-seeded SMS tokens")
    s.add_argument("--runs", type=int, default=100)
    s.add_argument("--window", type=int, default=2000, help="half-width of the send-time window in ms")
    s.set_defaults(func=cmd_ries_sms_attack)
    return p


USAGE_ERRORS = (UsageError, E.ConfigError, BallotError, SharingError)
STATE_ERRORS = (
    E.StateError,
    BoardError,
    BallotStateError,
    AuthenticationError,
    InsufficientShares,
    InvalidShareProof,
    FileNotFoundError,
)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except USAGE_ERRORS as exc:
        print(f"evote: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except STATE_ERRORS as exc:
        print(f"evote: error: {exc}", file=sys.stderr)
        return EXIT_STATE
    except ValueError as exc:
        print(f"evote: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
