"""Block ciphers behind the RIES key derivation and vote-code MAC.

Two realizations share one interface (``derive`` a voter key from a master
key, ``mac`` a message under a voter key):

* ``ToyCipher`` - an 8-round Feistel network on 64-bit blocks whose key is cut
  down to 16-28 bits, so exhaustive key search fits on a desk. All arithmetic
  stays below 2**64, which lets the same code run on Python ints or on numpy
  uint64 arrays holding many candidate keys at once.
* ``LegacyCipher`` - the nominal construction: two-key triple DES for the
  master key, single DES CBC-MAC for vote codes.
"""

from __future__ import annotations

import numpy as np

M32 = 0xFFFFFFFF
ROUNDS = 8
TOY_WIDTHS = range(16, 29)
NOMINAL_WIDTH = 112


def _mix32(x):
    x = x & M32
    x = x ^ (x >> 16)
    x = (x * 0x85EBCA6B) & M32
    x = x ^ (x >> 13)
    x = (x * 0xC2B2AE35) & M32
    return x ^ (x >> 16)


def round_keys(key):
    return [_mix32(key ^ ((0x9E3779B9 * (r + 1)) & M32)) for r in range(ROUNDS)]


def _encrypt_with(subkeys, block):
    left, right = block >> 32, block & M32
    for sk in subkeys:
        left, right = right, left ^ _mix32(right ^ sk)
    return (left << 32) | right


def feistel_encrypt(key, block):
    """Encrypt one 64-bit block. `key` may be an int or a uint64 array."""
    return _encrypt_with(round_keys(key), block)


def pad_blocks(data: bytes) -> list[int]:
    if len(data) % 8:
        data += b"\x00" * (8 - len(data) % 8)
    return [int.from_bytes(data[i : i + 8], "big") for i in range(0, len(data), 8)]


def toy_cbc_mac(key, data: bytes):
    subkeys = round_keys(key)
    state = 0
    for block in pad_blocks(data):
        state = _encrypt_with(subkeys, state ^ block)
    return state


def toy_cbc_mac_many(keys: np.ndarray, data: bytes) -> np.ndarray:
    return np.asarray(toy_cbc_mac(keys.astype(np.uint64), data), dtype=np.uint64)


class ToyCipher:
    def __init__(self, key_bits: int) -> None:
        if key_bits not in TOY_WIDTHS:
            raise ValueError(f"toy key width must be in 16..28, got {key_bits}")
        self.key_bits = key_bits
        self.voter_key_bits = key_bits
        self.label = f"toy-feistel-{key_bits}"

    def derive(self, master_key: int, data: bytes) -> int:
        return int(toy_cbc_mac(master_key, data)) & ((1 << self.key_bits) - 1)

    def mac(self, voter_key: int, data: bytes) -> bytes:
        return int(toy_cbc_mac(voter_key, data)).to_bytes(8, "big")


def _legacy_algorithm():
    try:
        from cryptography.hazmat.decrepit.ciphers.algorithms import TripleDES
    except ImportError:  # older cryptography releases
        try:
            from cryptography.hazmat.primitives.ciphers.algorithms import TripleDES
        except ImportError:
            return None
    return TripleDES


def legacy_available() -> bool:
    return _legacy_algorithm() is not None


def _cbc_last_block(key: bytes, data: bytes) -> bytes:
    from cryptography.hazmat.primitives.ciphers import Cipher, modes

    if len(data) % 8:
        data += b"\x00" * (8 - len(data) % 8)
    enc = Cipher(_legacy_algorithm()(key), modes.CBC(b"\x00" * 8)).encryptor()
    return (enc.update(data) + enc.finalize())[-8:]


class LegacyCipher:
    """2TDES master key (112 bits), DES voter keys (56 effective bits)."""

    key_bits = NOMINAL_WIDTH
    voter_key_bits = 56
    label = "2tdes/des"

    def __init__(self) -> None:
        if not legacy_available():
            raise RuntimeError("DES/3DES primitives unavailable")

    def derive(self, master_key: int, data: bytes) -> int:
        k = master_key.to_bytes(16, "big")
        return int.from_bytes(_cbc_last_block(k + k[:8], data), "big")

    def mac(self, voter_key: int, data: bytes) -> bytes:
        # K1 = K2 = K3 makes triple DES degenerate to single DES
        k = voter_key.to_bytes(8, "big")
        return _cbc_last_block(k * 3, data)


def cipher_for(key_bits: int):
    """Cipher for a width; nominal width falls back to the widest toy cipher."""
    if key_bits == NOMINAL_WIDTH:
        if legacy_available():
            return LegacyCipher()
        fallback = ToyCipher(max(TOY_WIDTHS))
        fallback.label += " (legacy DES unavailable)"
        return fallback
    return ToyCipher(key_bits)
