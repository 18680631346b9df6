"""
Classical post-processing of the sifted key: interactive parity-bisection
error correction followed by Toeplitz-hash privacy amplification.

Bob corrects his key towards Alice's. Every parity Alice discloses is counted
so the leak can be charged against the final key length.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.signal import fftconvolve

from .protocol import KeyMaterial

VERIFY_BITS = 64


@dataclass
class ReconciliationResult:
    corrected_key: np.ndarray
    parity_bits_leaked: int
    rounds_of_bisection: int
    verification_bits_leaked: int = 0
    passes: int = 0
    success: bool = True

    @property
    def total_leaked(self) -> int:
        return self.parity_bits_leaked + self.verification_bits_leaked


class _AliceParities:
    """Alice's side of the public channel: answers parity queries on her key."""

    def __init__(self, key: np.ndarray):
        self.key = key
        self.disclosed = 0

    def parity(self, idx: np.ndarray) -> int:
        self.disclosed += 1
        return int(self.key[idx].sum() & 1)


def _parity(key: np.ndarray, idx: np.ndarray) -> int:
    return int(key[idx].sum() & 1)


def _hashes_match(a: np.ndarray, b: np.ndarray, rng: np.random.Generator, bits: int) -> bool:
    """Compare ``bits`` random subset parities; distinct keys collide with probability 2**-bits."""
    h = rng.integers(0, 2, size=(bits, len(a)), dtype=np.int64)
    return bool(np.array_equal((h @ a) & 1, (h @ b) & 1))


def initial_block_size(qber_estimate: Optional[float], n: int) -> int:
    q = max(qber_estimate or 0.0, 0.01)
    return int(min(max(1, n), max(1, math.floor(0.73 / q))))


def reconcile(
    alice_key,
    bob_key,
    rng: np.random.Generator,
    qber_estimate: Optional[float] = None,
    max_passes: int = 16,
    min_passes: int = 4,
    verify_bits: int = VERIFY_BITS,
) -> ReconciliationResult:
    """
    Multi-pass block-parity bisection with backtracking across passes.

    Pass 0 splits the key into blocks of ``~0.73/qber`` bits; each later
    pass shuffles positions and doubles the block size. Whenever a bit is
    flipped, blocks of all earlier passes containing it are re-examined.
    The keys are compared with a ``verify_bits`` random linear hash before
    the first pass (identical keys disclose nothing else) and after every
    pass from ``min_passes`` on. ``success`` is False if the hashes still
    differ after ``max_passes``.
    """
    a = np.asarray(alice_key, dtype=np.int64)
    b = np.array(bob_key, dtype=np.int64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"keys must be equal-length bit strings, got {a.shape} and {b.shape}")
    n = len(a)
    result = ReconciliationResult(b, 0, 0)
    if n == 0:
        return result

    result.verification_bits_leaked += verify_bits
    if _hashes_match(a, b, rng, verify_bits):
        result.corrected_key = b.astype(np.uint8)
        return result

    alice = _AliceParities(a)
    k1 = initial_block_size(qber_estimate, n)
    perms: list[np.ndarray] = []
    block_of: list[np.ndarray] = []
    sizes: list[int] = []
    alice_block_parity: list[np.ndarray] = []

    def block(p: int, blk: int) -> np.ndarray:
        k = sizes[p]
        return perms[p][blk * k : (blk + 1) * k]

    def mismatched(p: int, blk: int) -> bool:
        return _parity(b, block(p, blk)) != alice_block_parity[p][blk]

    def bisect(idx: np.ndarray) -> int:
        lo, hi = 0, len(idx)
        while hi - lo > 1:
            mid = (lo + hi) // 2
            half = idx[lo:mid]
            if alice.parity(half) != _parity(b, half):
                hi = mid
            else:
                lo = mid
        result.rounds_of_bisection += 1
        return int(idx[lo])

    def settle(queue: deque, upto: int) -> None:
        while queue:
            p, blk = queue.popleft()
            if not mismatched(p, blk):
                continue
            j = bisect(block(p, blk))
            b[j] ^= 1
            for q in range(upto + 1):
                other = int(block_of[q][j])
                if (q, other) != (p, blk) and mismatched(q, other):
                    queue.append((q, other))

    for p in range(max_passes):
        perm = np.arange(n) if p == 0 else rng.permutation(n)
        k = min(n, k1 * 2**p)
        inverse = np.empty(n, dtype=np.int64)
        inverse[perm] = np.arange(n)
        perms.append(perm)
        sizes.append(k)
        block_of.append(inverse // k)
        n_blocks = -(-n // k)
        alice_block_parity.append(
            np.array([alice.parity(perm[i * k : (i + 1) * k]) for i in range(n_blocks)], dtype=np.int64)
        )
        settle(deque((p, blk) for blk in range(n_blocks) if mismatched(p, blk)), p)
        result.passes = p + 1
        if p + 1 >= min_passes:
            result.verification_bits_leaked += verify_bits
            if _hashes_match(a, b, rng, verify_bits):
                break
    else:
        result.success = False

    result.parity_bits_leaked = alice.disclosed
    result.corrected_key = b.astype(np.uint8)
    return result


def secure_length(n: int, leaked_bits: int, eve_info_rate: float, safety: int) -> int:
    """n - leaked - ceil(n * eve_info_rate) - safety (may be <= 0)."""
    # the 1e-9 slack keeps e.g. 1000 * 0.311 from rounding up to 312
    return n - leaked_bits - math.ceil(n * eve_info_rate - 1e-9) - safety


@dataclass
class AmplifiedKey:
    bits: np.ndarray
    aborted: bool

    def __len__(self) -> int:
        return len(self.bits)


def toeplitz_seed_bits(n: int, m: int, seed) -> np.ndarray:
    return np.random.default_rng(seed).integers(0, 2, size=n + m - 1, dtype=np.int64)


def toeplitz_hash(key: np.ndarray, m: int, seed) -> np.ndarray:
    """
    ``T @ key mod 2`` for the m x n Toeplitz matrix ``T[i, j] = s[i - j + n - 1]``.

    Evaluated as a convolution so large keys never materialize ``T``.
    """
    key = np.asarray(key, dtype=np.int64)
    n = len(key)
    s = toeplitz_seed_bits(n, m, seed)
    if n * m <= 1 << 22:
        full = np.convolve(s, key)
    else:
        full = np.rint(fftconvolve(s.astype(float), key.astype(float))).astype(np.int64)
    return (full[n - 1 : n - 1 + m] & 1).astype(np.uint8)


def privacy_amplify(key, leaked_bits: int, eve_info_rate: float, safety: int, seed) -> AmplifiedKey:
    """Compress ``key`` to :func:`secure_length` bits; empty and ``aborted`` when nothing is left."""
    key = np.asarray(key)
    m = secure_length(len(key), leaked_bits, eve_info_rate, safety)
    if m <= 0:
        return AmplifiedKey(np.zeros(0, dtype=np.uint8), aborted=True)
    return AmplifiedKey(toeplitz_hash(key, m, seed), aborted=False)


@dataclass
class PostprocessResult:
    reconciliation: ReconciliationResult
    final_length: int
    aborted: bool


def postprocess_keys(
    keys: KeyMaterial,
    qber_estimate: float,
    eve_info_rate: float,
    safety: int,
    reconcile_rng: np.random.Generator,
    amplify_seed,
) -> PostprocessResult:
    """Reconcile the unsampled sifted keys and hash both sides with the same seed."""
    alice, bob = keys.remaining_alice, keys.remaining_bob
    rec = reconcile(alice, bob, reconcile_rng, qber_estimate=qber_estimate)
    keys.corrected = rec.corrected_key
    if not rec.success:
        keys.amplified_alice = keys.amplified_bob = np.zeros(0, dtype=np.uint8)
        return PostprocessResult(rec, 0, True)
    final_a = privacy_amplify(alice, rec.total_leaked, eve_info_rate, safety, amplify_seed)
    final_b = privacy_amplify(rec.corrected_key, rec.total_leaked, eve_info_rate, safety, amplify_seed)
    keys.amplified_alice, keys.amplified_bob = final_a.bits, final_b.bits
    return PostprocessResult(rec, len(final_a), final_a.aborted)
