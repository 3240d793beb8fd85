"""Acceptance criteria, one test each. The terminal summary prints AC-NN PASS/FAIL."""

import itertools
import json
import random
import shutil
import time

import pytest

from conftest import MID, make_election
from evoting import elgamal, sharing
from evoting.ballot import BallotPlain, BallotPreparationSystem, authenticate_and_cast, prepare, seal
from evoting.board import BulletinBoard, tally
from evoting.cli import EXIT_OK, EXIT_VERIFY, main
from evoting.elgamal import Ciphertext
from evoting.group import TOY
from evoting.ries import (
    RiesParams,
    SmsLoginServer,
    attacker_birthyear,
    forge_vote_code,
    registry_attack,
    score_registry_attack,
    simulate_election,
    sms_token_attack,
)
from evoting.rng import SeededRng
from evoting.sharing import SharePoint, SharingPolicy


def run(*argv):
    return main([str(a) for a in argv])


@pytest.mark.acceptance(1, "homomorphic identity, 1000 toy trials, < 5 s")
def test_ac01_homomorphic_identity():
    rng = SeededRng("ac1")
    kp = elgamal.keygen(TOY, rng)
    bound = TOY.q - 1
    rnd = random.Random(1)
    t0 = time.perf_counter()
    for _ in range(1000):
        a = rnd.randint(0, bound)
        b = rnd.randint(0, bound - a)
        ca = elgamal.encrypt(TOY, a, kp.h, TOY.random_scalar(rng))
        cb = elgamal.encrypt(TOY, b, kp.h, TOY.random_scalar(rng))
        assert elgamal.decrypt(TOY, elgamal.homomorphic_add(TOY, ca, cb), kp.x, bound) == a + b
    assert time.perf_counter() - t0 < 5


@pytest.mark.acceptance(2, "worked toy vectors")
def test_ac02_toy_vectors():
    p, g, h = 23, 2, 8
    # independent oracle with plain integer arithmetic
    assert (pow(g, 2, p), pow(g, 1, p) * pow(h, 2, p) % p) == (4, 13)
    assert (pow(g, 3, p), pow(h, 3, p)) == (8, 6)
    assert (TOY.p, TOY.q, TOY.g) == (23, 11, 2)
    c1 = elgamal.encrypt(TOY, 1, h, 2)
    c0 = elgamal.encrypt(TOY, 0, h, 3)
    assert c1 == Ciphertext(4, 13) and c0 == Ciphertext(8, 6)
    prod = elgamal.homomorphic_add(TOY, c1, c0)
    assert prod == Ciphertext(9, 9)
    x = 3  # 2**3 = 8 = h
    assert elgamal.decrypt_to_group(TOY, prod, x) == 2 == pow(g, 1, p)
    assert elgamal.decrypt(TOY, prod, x, 10) == 1


@pytest.mark.acceptance(3, "Shamir k-of-n exhaustive over n <= 6, committed vector, < 10 s")
def test_ac03_shamir():
    q = TOY.q
    rng = SeededRng("ac3")
    t0 = time.perf_counter()
    for n in range(1, 7):
        for k in range(1, n + 1):
            policy = SharingPolicy(k, n)
            for _ in range(100):
                secret = TOY.random_scalar(rng)
                shares = sharing.split(secret, policy, q, rng)
                for subset in itertools.combinations(shares, k):
                    assert sharing.reconstruct(list(subset), q) == secret
    assert time.perf_counter() - t0 < 10
    assert sharing.shares_from_coefficients([5, 3], 3, q) == [SharePoint(1, 8), SharePoint(2, 0), SharePoint(3, 3)]


@pytest.mark.acceptance(4, "threshold tally equals oracle for every k-subset, 50 elections, < 60 s")
def test_ac04_threshold_tally_equivalence():
    rnd = random.Random(4)
    t0 = time.perf_counter()
    for e in range(50):
        n = rnd.randint(1, 5)
        k = rnd.randint(1, min(n, 3))
        voters = rnd.randint(1, 20)
        cands = rnd.randint(1, 4)
        max_sel = rnd.randint(1, cands)
        record, roster, keys, creds = make_election(MID, [f"c{i}" for i in range(cands)], max_sel, k, n, voters, e)
        rng = SeededRng("ac4", e)
        board = BulletinBoard.create(record)
        latest = {}
        for _ in range(rnd.randint(0, voters + 5)):
            ident = f"voter{rnd.randrange(voters)}"
            picks = rnd.sample(range(cands), rnd.randint(0, max_sel))
            choices = tuple(int(i in picks) for i in range(cands))
            sealed = seal(prepare(record, BallotPlain(record.election_id, choices), rng))
            authenticate_and_cast(sealed, creds[ident], board, roster)
            latest[ident] = choices
        board.close()
        oracle = tuple(sum(c[i] for c in latest.values()) for i in range(cands))
        for subset in itertools.combinations(keys, k):
            assert tally(board, list(subset), rng).counts == oracle, (e, [t.index for t in subset])
    assert time.perf_counter() - t0 < 60


class WrongCandidateBPS(BallotPreparationSystem):
    def plaintext_to_encrypt(self, choices):
        return choices[-1:] + choices[:-1]


@pytest.mark.acceptance(5, "Benaloh audit catches a cheating BPS 100/100, honest passes 100/100")
def test_ac05_benaloh_audit():
    record, *_ = make_election(TOY, candidates="ABCD")
    rnd = random.Random(5)
    caught = 0
    cheat = WrongCandidateBPS(record, SeededRng("ac5", "cheat"))
    for _ in range(100):
        pick = rnd.randrange(4)
        intended = BallotPlain(record.election_id, tuple(int(i == pick) for i in range(4)))
        verdict, _, _ = cheat.audit(cheat.prepare(intended), intended)
        caught += not verdict
    assert caught == 100

    honest = BallotPreparationSystem(record, SeededRng("ac5", "honest"))
    intended = BallotPlain(record.election_id, (0, 1, 0, 0))
    pb = honest.prepare(intended)
    passed, commitments = 0, [pb.commitment]
    for _ in range(100):
        verdict, pb, _ = honest.audit(pb, intended)
        passed += verdict
        assert pb.commitment != commitments[-1]
        commitments.append(pb.commitment)
    assert passed == 100


# -- AC6: mutation suite ---------------------------------------------------------------


def _bump(v):
    return str(int(v) + 1)


def _board_mutation(line_no, fn):
    def apply(d):
        path = d / "board.jsonl"
        lines = path.read_text().splitlines()
        rec = json.loads(lines[line_no])
        fn(rec)
        lines[line_no] = json.dumps(rec, sort_keys=True, separators=(",", ":"))
        path.write_text("\n".join(lines) + "\n")

    return apply


def _tally_mutation(fn):
    def apply(d):
        path = d / "tally.json"
        doc = json.loads(path.read_text())
        fn(doc)
        path.write_text(json.dumps(doc))

    return apply


def _set(obj, keys, value_fn):
    for k in keys[:-1]:
        obj = obj[k]
    obj[keys[-1]] = value_fn(obj[keys[-1]])


def _drop_line(line_no):
    def apply(d):
        path = d / "board.jsonl"
        lines = path.read_text().splitlines(keepends=True)
        del lines[line_no]
        path.write_text("".join(lines))

    return apply


def _replay_ballot(src, dst):
    def apply(d):
        path = d / "board.jsonl"
        lines = path.read_text().splitlines()
        rec = json.loads(lines[dst])
        rec["ballot"] = json.loads(lines[src])["ballot"]
        lines[dst] = json.dumps(rec, sort_keys=True, separators=(",", ":"))
        path.write_text("\n".join(lines) + "\n")

    return apply


MUTATIONS = {
    "entry identity": _board_mutation(1, lambda r: r.update(identity="mallory")),
    "entry sequence": _board_mutation(2, lambda r: _set(r, ["sequence"], lambda s: s + 5)),
    "entry supersedes": _board_mutation(2, lambda r: r.update(supersedes=1)),
    "entry ciphertext a": _board_mutation(1, lambda r: _set(r, ["ballot", "ciphertexts", 0, "a"], _bump)),
    "entry ciphertext b": _board_mutation(3, lambda r: _set(r, ["ballot", "ciphertexts", 1, "b"], _bump)),
    "entry commitment": _board_mutation(2, lambda r: r["ballot"].update(commitment="0" * 64)),
    "proof challenge": _board_mutation(1, lambda r: _set(r, ["ballot", "proofs", 0, "challenges", 0], _bump)),
    "proof response": _board_mutation(2, lambda r: _set(r, ["ballot", "proofs", 1, "responses", 1], _bump)),
    "proof commitment": _board_mutation(3, lambda r: _set(r, ["ballot", "proofs", 2, "commitments", 0, 0], _bump)),
    "sum proof response": _board_mutation(1, lambda r: _set(r, ["ballot", "sum_proof", "responses", 0], _bump)),
    "header public key": _board_mutation(0, lambda r: _set(r, ["public_key"], _bump)),
    "close digest": _board_mutation(-1, lambda r: r.update(digest="f" * 64)),
    "deleted ballot": _drop_line(2),
    "replayed ballot": _replay_ballot(1, 3),
    "count": _tally_mutation(lambda t: _set(t, ["counts", 0], lambda c: c + 1)),
    "share value": _tally_mutation(lambda t: _set(t, ["shares", 1, 0, "share"], _bump)),
    "share proof response": _tally_mutation(lambda t: _set(t, ["shares", 0, 1, "proof", "response"], _bump)),
    "share trustee index": _tally_mutation(lambda t: _set(t, ["shares", 2, 0, "index"], lambda i: 3 if i != 3 else 2)),
    "share dropped": _tally_mutation(lambda t: t["shares"][0].pop()),
    "tally sum": _tally_mutation(lambda t: _set(t, ["sums", 1, "a"], _bump)),
    "active count": _tally_mutation(lambda t: _set(t, ["active_count"], lambda c: c + 1)),
    "tally board digest": _tally_mutation(lambda t: t.update(board_digest="a" * 64)),
}


@pytest.fixture(scope="module")
def completed_election(tmp_path_factory):
    base = tmp_path_factory.mktemp("ac6")
    cfg = {
        "election_id": "ac6",
        "candidates": ["A", "B", "C"],
        "max_selections": 2,
        "roster": [{"identity": f"v{i}", "credential": f"pw{i}"} for i in range(6)],
        "trustees": {"k": 2, "n": 3},
        "group": MID.to_dict(),
    }
    (base / "config.json").write_text(json.dumps(cfg))
    d = base / "election"
    assert run("setup", "--election-dir", d, "--config", base / "config.json", "--seed", 6) == EXIT_OK
    for cred, choices in [("pw0", "1,0,0"), ("pw1", "0,1,1"), ("pw2", "0,0,1"), ("pw3", "1,1,0")]:
        assert run("vote", "--election-dir", d, "--credential", cred, "--choices", choices, "--seed", 6) == EXIT_OK
    assert run("close", "--election-dir", d) == EXIT_OK
    trustees = [a for i in (1, 3) for a in ("--trustee-file", d / "trustees" / f"trustee-{i}.json")]
    assert run("tally", "--election-dir", d, *trustees) == EXIT_OK
    assert run("verify", "--election-dir", d, "--all-receipts") == EXIT_OK
    return d


@pytest.mark.acceptance(6, ">= 12 single-field mutations each caught by verify with nonzero exit")
def test_ac06_mutation_suite(completed_election, tmp_path, capsys):
    assert len(MUTATIONS) >= 12
    missed = []
    for i, (name, mutate) in enumerate(MUTATIONS.items()):
        d = tmp_path / f"m{i}"
        shutil.copytree(completed_election, d)
        before = {p.name: p.read_bytes() for p in (d / "board.jsonl", d / "tally.json")}
        mutate(d)
        after = {p.name: p.read_bytes() for p in (d / "board.jsonl", d / "tally.json")}
        assert before != after, name
        code = run("verify", "--election-dir", d)
        report = json.loads((d / "verification.json").read_text())
        failing = [c["name"] for c in report["checks"] if not c["passed"]]
        if code != EXIT_VERIFY or not failing:
            missed.append(name)
        capsys.readouterr()
    assert missed == []


@pytest.mark.acceptance(7, "RIES forgery at 20 bits, 1000 voters, within 2^20 MACs, < 60 s")
def test_ac07_ries_forgery(capsys):
    rng = random.Random(7)
    params = RiesParams(rng.getrandbits(20), "GR2008", key_bits=20)
    sim = simulate_election(params, 1000, 0.7, rng)
    t0 = time.perf_counter()
    res = forge_vote_code(params.election_id, params.candidates, sim.reference, 20, birthyear=attacker_birthyear(sim))
    assert res.found and res.trials <= 2**20
    assert time.perf_counter() - t0 < 60
    t0 = time.perf_counter()
    assert run("ries", "forge", "--key-bits", 20, "--voters", 1000, "--seed", 7) == EXIT_OK
    assert time.perf_counter() - t0 < 60
    out = capsys.readouterr().out
    assert "extrapolation to 2^36 keys" in out
    with capsys.disabled():
        print("\n" + out.strip())


@pytest.mark.acceptance(8, "RIES registry attack, 50 voters, 0 errors against ground truth")
def test_ac08_registry_attack():
    rng = random.Random(8)
    params = RiesParams(rng.getrandbits(20), "GR2008", key_bits=20)
    sim = simulate_election(params, 50, 0.7, rng)
    findings = registry_attack(params, [v.vnid for v in sim.voters] + ["BSN000000000"], sim.reference, sim.published)
    score = score_registry_attack(findings, sim)
    assert score["errors"] == []
    assert score["attributed"] == score["cast"] > 0
    assert findings[-1].status == "not eligible"
    assert sum(f.status == "eligible, did not vote" for f in findings) == 50 - score["cast"]


@pytest.mark.acceptance(9, "SMS token recovered within window-width guesses, 100 windows of +-2000 ms")
def test_ac09_sms_tokens():
    rnd = random.Random(9)
    for _ in range(100):
        t = 1_200_000_000_000 + rnd.randrange(10**10)
        observed = t + rnd.randint(-2000, 2000)
        res = sms_token_attack((observed - 2000, observed + 2000), SmsLoginServer(t).check)
        assert res.hit and res.guesses <= 4001


@pytest.mark.acceptance(10, "deterministic replay gives byte-identical boards")
def test_ac10_deterministic_replay(tmp_path):
    cfg = tmp_path / "config.json"
    cfg.write_text(
        json.dumps(
            {
                "election_id": "replay",
                "candidates": ["A", "B", "C"],
                "max_selections": 1,
                "roster": [{"identity": f"v{i}", "credential": f"pw{i}"} for i in range(5)],
                "trustees": {"k": 2, "n": 3},
            }
        )
    )
    script = [("pw0", "A", 1), ("pw1", "B", 0), ("pw2", "B", 2), ("pw0", "C", 0), ("pw4", "A", 0)]
    boards = []
    for run_no in range(2):
        d = tmp_path / f"run{run_no}"
        assert run("setup", "--election-dir", d, "--config", cfg, "--seed", 42) == EXIT_OK
        for cred, choice, audits in script:
            assert run("vote", "--election-dir", d, "--credential", cred, "--choice", choice, "--audit", audits, "--seed", 42) == 0
        assert run("close", "--election-dir", d) == EXIT_OK
        boards.append((d / "board.jsonl").read_bytes())
    assert boards[0] == boards[1]
    assert boards[0].count(b"\n") == 1 + len(script) + 1
