"""Desk-scale reconstruction of the RIES vote-code scheme and its attacks."""

from .attacks import (
    ForgeResult,
    RegistryFinding,
    SmsLoginServer,
    attacker_birthyear,
    forge_vote_code,
    registry_attack,
    score_registry_attack,
    sms_token,
    sms_token_attack,
)
from .scheme import (
    RiesElection,
    RiesParams,
    RiesVoter,
    VoteCode,
    derive_voter_key,
    make_vote_code,
    simulate_election,
    table_from_csv,
    table_to_csv,
    verify_vote_code,
)

__all__ = [
    "ForgeResult",
    "RegistryFinding",
    "RiesElection",
    "RiesParams",
    "RiesVoter",
    "SmsLoginServer",
    "VoteCode",
    "attacker_birthyear",
    "derive_voter_key",
    "forge_vote_code",
    "make_vote_code",
    "registry_attack",
    "score_registry_attack",
    "simulate_election",
    "sms_token",
    "sms_token_attack",
    "table_from_csv",
    "table_to_csv",
    "verify_vote_code",
]
