import pytest

from evoting.group import TOY, GroupParams
from evoting.rng import SeededRng

# 128-bit safe-prime group: large enough that tallies of dozens of voters
# decode unambiguously, small enough for fast exhaustive property runs.
MID = GroupParams(
    p=189937553033862335693086095527784833267,
    q=94968776516931167846543047763892416633,
    g=4,
    name="mid128",
)


class ScriptedRng:
    """Entropy source replaying fixed byte chunks, one per randbytes call."""

    def __init__(self, chunks):
        self.chunks = list(chunks)
        self.calls = []

    def randbytes(self, n):
        chunk = self.chunks.pop(0)
        self.calls.append(n)
        assert len(chunk) == n
        return chunk


@pytest.fixture
def toy():
    return TOY


@pytest.fixture
def mid():
    return MID


@pytest.fixture
def rng(request):
    return SeededRng("tests", request.node.nodeid)


_acceptance = []


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    marker = getattr(report, "acceptance", None)
    if marker:
        _acceptance.append((marker, report.outcome))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("acceptance")
    if m:
        rep.acceptance = (m.args[0], m.args[1])


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for (number, title), outcome in sorted(_acceptance):
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"AC-{number:02d} {status}  {title}")


def make_election(params, candidates=("A", "B", "C"), max_selections=1, k=2, n=3, voters=5, seed=0, pseudonyms=False):
    """Record, roster, trustee keys and credentials for an in-memory election."""
    from evoting import trustees
    from evoting.record import ElectionRecord
    from evoting.roster import Roster, Voter, credential_digest
    from evoting.sharing import SharingPolicy

    policy = SharingPolicy(k, n)
    public, keys = trustees.dealer_keygen(params, policy, SeededRng("election", seed))
    creds = {f"voter{i}": f"secret-{seed}-{i}" for i in range(voters)}
    roster = Roster(
        [Voter(ident, credential_digest(c), f"P{i}" if pseudonyms else None) for i, (ident, c) in enumerate(creds.items())],
        pseudonyms,
    )
    record = ElectionRecord(
        election_id=f"test-{seed}",
        candidates=tuple(candidates),
        max_selections=max_selections,
        params=params,
        h=public.h,
        policy=policy,
        verification_keys=public.verification_keys,
        roster=roster.public_identities(),
        pseudonyms=pseudonyms,
    )
    return record, roster, keys, creds
