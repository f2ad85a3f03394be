"""Classical post-processing: entropy bookkeeping, Cascade-style error
correction and Toeplitz-hash privacy amplification."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

# initial Cascade block size is about 0.73 / e
CASCADE_BLOCK_CONSTANT = 0.73
CASCADE_PASSES = 4
# block-size hint used when the caller has no QBER estimate
DEFAULT_QBER_HINT = 0.01


class SecurityMarginExhausted(ValueError):
    """The QBER exceeds the single-photon fraction beta; no key can be distilled."""


@dataclass
class PostprocResult:
    corrected_key: np.ndarray
    leaked_bits: int
    final_key: np.ndarray
    final_length: int

    def __post_init__(self):
        if not 0 <= self.final_length <= len(self.corrected_key):
            raise ValueError("final_length must lie in [0, len(corrected_key)]")


def _check_fraction(e: float, name: str = "e") -> None:
    if not 0.0 <= e <= 1.0 or math.isnan(e):
        raise ValueError(f"{name} must lie in [0, 1], got {e}")


def binary_entropy(e: float) -> float:
    _check_fraction(e)
    if e == 0.0 or e == 1.0:
        return 0.0
    return -e * math.log2(e) - (1.0 - e) * math.log2(1.0 - e)


def tau_fraction(e: float) -> float:
    """Fraction of the corrected key removed by privacy amplification."""
    _check_fraction(e)
    if e > 0.5:
        return 1.0
    return math.log2(1.0 + 4.0 * e - 4.0 * e * e)


def gain_bracket(e: float, beta: float, f_casc: float = 1.0) -> float:
    """beta [1 - tau(e / beta)] - f_casc h(e), unclamped.

    Raises SecurityMarginExhausted when ``e > beta`` or ``beta <= 0``.
    """
    _check_fraction(e)
    if beta <= 0 or e > beta:
        raise SecurityMarginExhausted(f"e={e:.6g} exceeds beta={beta:.6g}")
    return beta * (1.0 - tau_fraction(min(e / beta, 1.0))) - f_casc * binary_entropy(e)


def final_key_length(n: int, e: float, beta: float, f_casc: float = 1.0) -> int:
    if n < 0:
        raise ValueError("n must be >= 0")
    if beta > 1:
        raise ValueError("beta must be <= 1")
    return int(math.floor(n * max(0.0, gain_bracket(e, beta, f_casc))))


def _parity(bits: np.ndarray) -> int:
    return int(np.count_nonzero(bits)) & 1


class _Cascade:
    def __init__(self, key_a, key_b, rng, qber, passes):
        self.a = np.asarray(key_a, dtype=np.int8)
        self.b = np.array(key_b, dtype=np.int8, copy=True)
        self.n = len(self.a)
        k1 = max(1, math.ceil(CASCADE_BLOCK_CONSTANT / max(qber, 1e-9)))
        self.block_sizes = [min(self.n, k1 * 2**p) for p in range(passes)]
        self.orders: list[np.ndarray] = []
        self.where: list[np.ndarray] = []   # bit index -> position in pass order
        self.alice_parity: list[np.ndarray] = []
        self.rng = rng
        self.leaked = 0
        self.flips = 0

    def block_members(self, p: int, block: int) -> np.ndarray:
        k = self.block_sizes[p]
        return self.orders[p][block * k:(block + 1) * k]

    def bisect(self, members: np.ndarray) -> int:
        # block has odd relative parity; Alice discloses left-half parities
        while len(members) > 1:
            half = len(members) // 2
            left = members[:half]
            self.leaked += 1
            if _parity(self.a[left]) != _parity(self.b[left]):
                members = left
            else:
                members = members[half:]
        return int(members[0])

    def run(self, passes: int):
        queue: deque[tuple[int, int]] = deque()
        for p in range(passes):
            order = np.arange(self.n) if p == 0 else self.rng.permutation(self.n)
            where = np.empty(self.n, dtype=np.int64)
            where[order] = np.arange(self.n)
            self.orders.append(order)
            self.where.append(where)
            k = self.block_sizes[p]
            nblocks = -(-self.n // k)
            pad = nblocks * k - self.n
            a_perm = np.concatenate([self.a[order], np.zeros(pad, np.int8)]).reshape(nblocks, k)
            b_perm = np.concatenate([self.b[order], np.zeros(pad, np.int8)]).reshape(nblocks, k)
            pa = a_perm.sum(axis=1) & 1
            self.alice_parity.append(pa)
            self.leaked += nblocks
            bad = np.flatnonzero(pa != (b_perm.sum(axis=1) & 1))
            queue.extend((p, int(blk)) for blk in bad)
            while queue:
                q, blk = queue.popleft()
                members = self.block_members(q, blk)
                if self.alice_parity[q][blk] == _parity(self.b[members]):
                    continue
                j = self.bisect(members)
                self.b[j] ^= 1
                self.flips += 1
                # the flip toggles the relative parity of j's block in every other pass
                for r in range(len(self.orders)):
                    if r != q:
                        queue.append((r, int(self.where[r][j] // self.block_sizes[r])))
        return self.b


def error_correct(key_a, key_b, rng: np.random.Generator, qber: float | None = None,
                  passes: int = CASCADE_PASSES):
    """Cascade reconciliation of Bob's key against Alice's.

    Parameters
    ----------
    key_a, key_b : array of bits
        Alice's reference key and Bob's noisy copy, same length.
    rng : numpy Generator
        Source of the per-pass shuffles.
    qber : float, optional
        Error-rate estimate that sets the first block size (about 0.73 / qber).
    passes : int
        Number of passes; block size doubles after each.

    Returns
    -------
    (corrected, leaked_bits)
        Bob's corrected key and the number of parities disclosed.
    """
    if len(key_a) != len(key_b):
        raise ValueError(f"key lengths differ: {len(key_a)} != {len(key_b)}")
    if len(key_a) == 0:
        return np.zeros(0, dtype=np.int8), 0
    cascade = _Cascade(key_a, key_b, rng, DEFAULT_QBER_HINT if qber is None else qber, passes)
    corrected = cascade.run(passes)
    return corrected, cascade.leaked


def toeplitz_seed_bits(n_in: int, n_out: int, seed) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.integers(0, 2, size=n_in + n_out - 1, dtype=np.int8)


def privacy_amplify(key, final_length: int, seed) -> np.ndarray:
    """Compress ``key`` to ``final_length`` bits with a seeded Toeplitz hash.

    Row i of the hash matrix is ``s[i + n - 1 - j]`` over input position j, so
    the product is a slice of the linear convolution of the seed string with
    the key, evaluated here by FFT and reduced mod 2.
    """
    key = np.asarray(key, dtype=np.int8)
    n = len(key)
    if final_length < 0 or final_length > n:
        raise ValueError(f"final_length {final_length} not in [0, {n}]")
    if final_length == 0:
        return np.zeros(0, dtype=np.int8)
    s = toeplitz_seed_bits(n, final_length, seed)
    size = len(s) + n - 1
    nfft = 1 << (size - 1).bit_length()
    conv = np.fft.irfft(np.fft.rfft(s, nfft) * np.fft.rfft(key, nfft), nfft)[:size]
    window = np.rint(conv[n - 1:n - 1 + final_length]).astype(np.int64)
    return (window & 1).astype(np.int8)


def postprocess(key_a, key_b, e: float, beta: float, rng: np.random.Generator,
                f_casc: float = 1.0):
    """Error correction then privacy amplification on both sides.

    Returns ``(alice_result, bob_result)``. The final length comes from the
    analytic f_casc h(e) leak term, not from the parities actually disclosed.
    """
    corrected, leaked = error_correct(key_a, key_b, rng, qber=max(e, DEFAULT_QBER_HINT))
    length = final_key_length(len(key_a), e, beta, f_casc)
    seed = int(rng.integers(0, 2**63 - 1))
    alice = PostprocResult(np.asarray(key_a, np.int8), leaked,
                           privacy_amplify(key_a, length, seed), length)
    bob = PostprocResult(corrected, leaked, privacy_amplify(corrected, length, seed), length)
    return alice, bob
