import itertools
import json
import random
from pathlib import Path

import pytest

from evoting import election as E
from evoting.cli import EXIT_OK, EXIT_STATE, EXIT_USAGE, EXIT_VERIFY, main


_config_ids = itertools.count()


def write_config(tmp_path, voters=4, candidates=("Alice", "Bob", "Carol"), k=2, n=3, max_sel=1, **extra):
    cfg = {
        "election_id": "cli-test",
        "candidates": list(candidates),
        "max_selections": max_sel,
        "roster": [{"identity": f"v{i}", "credential": f"pw{i}"} for i in range(voters)],
        "trustees": {"k": k, "n": n},
        **extra,
    }
    path = tmp_path / f"config-{next(_config_ids)}.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(cfg))
    return path


def trustee(d, i):
    return str(Path(d) / "trustees" / f"trustee-{i}.json")


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture
def election(tmp_path):
    d = tmp_path / "el"
    assert run("setup", "--election-dir", d, "--config", write_config(tmp_path), "--seed", 1) == EXIT_OK
    return d


def test_setup_writes_public_record_and_trustee_files(election):
    assert sorted(p.name for p in (election / "trustees").iterdir()) == [f"trustee-{i}.json" for i in (1, 2, 3)]
    record = json.loads((election / "election.json").read_text())
    assert record["policy"] == {"k": 2, "n": 3}
    header = json.loads((election / "board.jsonl").read_text().splitlines()[0])
    assert header["type"] == "header" and header["public_key"] == record["public_key"]
    assert header["public_seed"] == record["notes"]["public_seed"]
    assert "x_i" not in json.dumps(record)
    stored = (election / "config.json").read_text() + (election / "roster.json").read_text()
    assert "pw0" not in stored and "credential_digest" in stored


def test_setup_refuses_existing_dir(election, tmp_path, capsys):
    assert run("setup", "--election-dir", election, "--config", write_config(tmp_path)) == EXIT_STATE
    assert "refusing to overwrite" in capsys.readouterr().err


def test_setup_config_errors_are_field_level(tmp_path, capsys):
    assert run("setup", "--election-dir", tmp_path / "x", "--config", write_config(tmp_path, k=4, n=3)) == EXIT_USAGE
    assert "trustees:" in capsys.readouterr().err
    bad = write_config(tmp_path, candidates=())
    assert run("setup", "--election-dir", tmp_path / "y", "--config", bad) == EXIT_USAGE
    assert "candidates:" in capsys.readouterr().err
    assert not (tmp_path / "x").exists()
    with pytest.raises(E.ConfigError) as err:
        E.ElectionConfig.from_dict({"roster": [{"identity": "a", "credential": "x"}, {"identity": "a", "credential": "y"}]})
    assert any(p.startswith("election_id") for p in err.value.problems)
    assert any("unique" in p for p in err.value.problems)


def test_vote_with_audits(election):
    assert run("vote", "--election-dir", election, "--credential", "pw0", "--choice", "Bob", "--audit", 2) == EXIT_OK
    audits = sorted((election / "audits").iterdir())
    assert len(audits) == 2
    docs = [json.loads(p.read_text()) for p in audits]
    assert all(d["verdict"] for d in docs)
    receipt = json.loads(next((election / "receipts").iterdir()).read_text())
    assert len({d["commitment"] for d in docs} | {receipt["commitment"]}) == 3


def test_vote_rejections(election, capsys):
    assert run("vote", "--election-dir", election, "--credential", "pw0", "--choices", "1,1,0") == EXIT_USAGE
    assert "overvote" in capsys.readouterr().err
    assert run("vote", "--election-dir", election, "--credential", "nope", "--choice", "Bob") == EXIT_STATE
    assert run("vote", "--election-dir", election, "--credential", "pw0", "--choice", "Zed") == EXIT_USAGE
    assert run("close", "--election-dir", election) == EXIT_OK
    assert run("vote", "--election-dir", election, "--credential", "pw0", "--choice", "Bob") == EXIT_STATE
    assert "closed" in capsys.readouterr().err


def test_revote_then_verify(election):
    run("vote", "--election-dir", election, "--credential", "pw0", "--choice", "Bob")
    run("vote", "--election-dir", election, "--credential", "pw0", "--choice", "Carol")
    run("close", "--election-dir", election)
    assert run("tally", "--election-dir", election, "--trustee-file", trustee(election, 1), "--trustee-file", trustee(election, 2)) == 0
    assert json.loads((election / "tally.json").read_text())["counts"] == [0, 0, 1]
    # the superseded receipt is reported as such; the latest one passes
    first, second = sorted((election / "receipts").iterdir())
    assert run("verify", "--election-dir", election, "--receipt", second) == EXIT_OK
    assert run("verify", "--election-dir", election, "--receipt", first) == EXIT_VERIFY
    report = json.loads((election / "verification.json").read_text())
    assert any(c["detail"] == "superseded" for c in report["checks"])


def test_tally_errors_and_subset_independence(election, capsys):
    for i, choice in enumerate(["Alice", "Bob", "Bob"]):
        run("vote", "--election-dir", election, "--credential", f"pw{i}", "--choice", choice)
    assert run("tally", "--election-dir", election, "--trustee-file", trustee(election, 1)) == EXIT_STATE
    assert "before close" in capsys.readouterr().err
    run("close", "--election-dir", election)
    assert run("tally", "--election-dir", election, "--trustee-file", trustee(election, 1)) == EXIT_STATE
    assert "need 1 more trustee" in capsys.readouterr().err
    counts = []
    for pair in [(1, 3), (1, 2), (2, 3)]:
        args = [a for i in pair for a in ("--trustee-file", trustee(election, i))]
        assert run("tally", "--election-dir", election, *args) == EXIT_OK
        counts.append(json.loads((election / "tally.json").read_text())["counts"])
    assert counts == [[1, 2, 0]] * 3


def completed(election, votes=(("pw0", "Alice"), ("pw1", "Bob"))):
    for cred, choice in votes:
        run("vote", "--election-dir", election, "--credential", cred, "--choice", choice)
    run("close", "--election-dir", election)
    run("tally", "--election-dir", election, "--trustee-file", trustee(election, 1), "--trustee-file", trustee(election, 3))
    return election


def test_verify_honest_and_scorecard(election, capsys):
    completed(election)
    assert run("verify", "--election-dir", election, "--all-receipts", "--non-voter", "v3") == EXIT_OK
    out = capsys.readouterr().out
    assert "verification: PASS" in out and "NOT PROVIDED (by design)" in out
    report = json.loads((election / "verification.json").read_text())
    assert report["passed"] and report["scorecard"]["Verifiability"]["status"] == "SATISFIED"
    assert "k of the n trustees" in report["scorecard"]["Integrity"]["note"]
    assert (election / "verification.txt").read_text().startswith("verification: PASS")


def test_verify_names_tampered_check(election, capsys):
    completed(election)
    lines = (election / "board.jsonl").read_text().splitlines(keepends=True)
    entry = json.loads(lines[1])
    entry["identity"] = "intruder"
    lines[1] = json.dumps(entry, sort_keys=True, separators=(",", ":")) + "\n"
    (election / "board.jsonl").write_text("".join(lines))
    assert run("verify", "--election-dir", election) == EXIT_VERIFY
    out = capsys.readouterr().out
    assert "[FAIL] eligible-identities: unexpected identity 'intruder'" in out


@pytest.mark.parametrize("scenario", E.SCENARIOS)
def test_demo_fraud_never_silent(election, tmp_path, scenario, capsys):
    completed(election)
    before = (election / "board.jsonl").read_bytes()
    assert run("demo-fraud", "--election-dir", election, "--scenario", scenario, "--workdir", tmp_path / "w") == EXIT_OK
    out = capsys.readouterr().out
    assert "NOT DETECTED" not in out
    assert (election / "board.jsonl").read_bytes() == before  # original untouched
    outcomes = E.demo_fraud(election, scenario, tmp_path / "w2")
    assert all(o.detected or o.note for o in outcomes)
    if scenario == "swap":
        assert "recombination" in outcomes[0].detected_by
    if scenario == "stuff":
        assert "unexpected identity" in outcomes[0].report.to_text()
        assert outcomes[1].detected_by == ["non-voter:v2"]
        assert "caught only by the non-voter check" in outcomes[1].note


def test_demo_fraud_stuff_without_non_voters(tmp_path):
    d = tmp_path / "full"
    run("setup", "--election-dir", d, "--config", write_config(tmp_path, voters=2), "--seed", 2)
    completed(d)
    outcomes = E.demo_fraud(d, "stuff", tmp_path / "w")
    assert outcomes[0].detected
    assert not outcomes[1].detected and "every eligible voter voted" in outcomes[1].note


def test_demo_fraud_needs_tally(election):
    assert run("demo-fraud", "--election-dir", election, "--scenario", "swap") == EXIT_STATE


def test_interactive_vote(election, monkeypatch, capsys):
    answers = iter(["a", "x", "a", "s"])
    monkeypatch.setattr("builtins.input", lambda prompt="": next(answers))
    assert run("vote", "--election-dir", election, "--credential", "pw2", "--choice", "Carol", "--interactive") == EXIT_OK
    assert len(list((election / "audits").iterdir())) == 2
    assert "audit 2: consistent" in capsys.readouterr().out


def test_coerce_me_export(election, capsys):
    assert run("vote", "--election-dir", election, "--credential", "pw1", "--choice", "Bob", "--coerce-me", "boss") == 0
    assert "Coercion resistance is NOT provided" in capsys.readouterr().err
    export = json.loads(next((election / "exports").iterdir()).read_text())
    assert export["plaintext"] == [0, 1, 0] and export["destination"] == "boss"


def test_pseudonym_mode(tmp_path):
    d = tmp_path / "ps"
    run("setup", "--election-dir", d, "--config", write_config(tmp_path), "--pseudonyms", "--seed", 4)
    completed(d)
    board = (d / "board.jsonl").read_text()
    assert '"identity":"v0"' not in board and '"identity":"V-' in board
    assert run("verify", "--election-dir", d, "--all-receipts", "--non-voter", "v3") == EXIT_OK
    assert run("verify", "--election-dir", d, "--non-voter", "v0") == EXIT_VERIFY


def scripted_election(tmp_path, seed, rnd, group="toy"):
    """Random election driven through the CLI; returns (dir, oracle counts)."""
    voters = rnd.randint(1, 10)
    cands = [f"c{i}" for i in range(rnd.randint(1, 4))]
    max_sel = rnd.randint(1, len(cands))
    k = rnd.randint(1, 3)
    n = rnd.randint(k, 4)
    d = tmp_path / f"e{seed}"
    cfg = write_config(tmp_path, voters, cands, k, n, max_sel, group=group)
    assert run("setup", "--election-dir", d, "--config", cfg, "--seed", seed) == EXIT_OK
    latest = {}
    for _ in range(rnd.randint(0, voters + 3)):
        i = rnd.randrange(voters)
        picks = rnd.sample(range(len(cands)), rnd.randint(0, max_sel))
        vec = [int(j in picks) for j in range(len(cands))]
        args = ["vote", "--election-dir", d, "--credential", f"pw{i}", "--choices", ",".join(map(str, vec)), "--seed", seed]
        if rnd.random() < 0.2:
            args += ["--audit", 1]
        assert run(*args) == EXIT_OK
        latest[i] = vec
    assert run("close", "--election-dir", d) == EXIT_OK
    chosen = sorted(rnd.sample(range(1, n + 1), k))
    args = [a for i in chosen for a in ("--trustee-file", trustee(d, i))]
    assert run("tally", "--election-dir", d, "--seed", seed, *args) == EXIT_OK
    oracle = [sum(v[j] for v in latest.values()) for j in range(len(cands))]
    return d, oracle


@pytest.mark.slow
def test_full_pipeline_property(tmp_path, capsys):
    rnd = random.Random(2024)
    for seed in range(200):
        d, oracle = scripted_election(tmp_path, seed, rnd)
        assert json.loads((d / "tally.json").read_text())["counts"] == oracle, seed
        assert run("verify", "--election-dir", d, "--all-receipts") == EXIT_OK, seed
        capsys.readouterr()


def test_deterministic_replay(tmp_path):
    a, _ = scripted_election(tmp_path / "a", 7, random.Random(1))
    b, _ = scripted_election(tmp_path / "b", 7, random.Random(1))
    c, _ = scripted_election(tmp_path / "c", 8, random.Random(1))
    assert (a / "board.jsonl").read_bytes() == (b / "board.jsonl").read_bytes()
    assert (a / "tally.json").read_bytes() == (b / "tally.json").read_bytes()
    assert (a / "board.jsonl").read_bytes() != (c / "board.jsonl").read_bytes()


def test_unseeded_runs_differ(tmp_path):
    boards = []
    for name in "xy":
        d = tmp_path / name
        run("setup", "--election-dir", d, "--config", write_config(tmp_path))
        run("vote", "--election-dir", d, "--credential", "pw0", "--choice", "Bob")
        boards.append((d / "board.jsonl").read_bytes())
    assert boards[0] != boards[1]


def test_modp2048_election(tmp_path):
    d = tmp_path / "big"
    assert run("setup", "--election-dir", d, "--config", write_config(tmp_path), "--group", "modp2048") == EXIT_OK
    completed(d)
    assert json.loads((d / "tally.json").read_text())["counts"] == [1, 1, 0]
    assert run("verify", "--election-dir", d, "--all-receipts") == EXIT_OK


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as e:
        main(["vote"])
    assert e.value.code == EXIT_USAGE


# -- ries subcommands -------------------------------------------------------------------


def test_ries_commands(tmp_path, capsys):
    sim = tmp_path / "sim"
    assert run("ries", "simulate", "--out", sim, "--voters", 30, "--key-bits", 16, "--seed", 3) == EXIT_OK
    assert {p.name for p in sim.iterdir()} == {"params.json", "registry.csv", "reference.csv", "published.csv", "truth.json"}
    assert run("ries", "simulate", "--out", sim) == EXIT_STATE
    capsys.readouterr()
    assert run("ries", "registry-attack", "--simulation", sim, "--extra-vnid", "BSN1") == EXIT_OK
    out = capsys.readouterr().out
    assert out.startswith("vnid,status,pseudo_id,birthyear\n") and "BSN1,not eligible" in out and "0 errors" in out
    assert run("ries", "forge", "--key-bits", 16, "--simulation", sim) == EXIT_OK
    out = capsys.readouterr().out
    assert "FORGED" in out and "extrapolation to 2^36 keys" in out
    assert run("ries", "forge", "--key-bits", 20, "--simulation", sim) == EXIT_USAGE
    assert run("ries", "sms-attack", "--runs", 3, "--seed", 1) == EXIT_OK
    assert "3/3 tokens recovered" in capsys.readouterr().out
