"""Deterministic seeded RNG streams: xoshiro256++ with SplitMix64 expansion.

A stream is identified by (master_seed, stream_index); identical identity
gives an identical output sequence forever, which is what makes jobs
replayable. Stream derivation: one SplitMix64 output of the stream index
is a per-stream constant; master_seed XOR that constant seeds a second
SplitMix64 pass that fills the four 64-bit state words.

Uniforms are ``(u64 >> 11) * 2**-53`` in [0, 1). Standard normals apply
the Acklam rational approximation of the inverse normal CDF to
``((u64 >> 11) + 0.5) * 2**-53``, which can never be 0 or 1.

Everything is implemented as one vectorized NumPy kernel stepping a batch
of streams in lockstep; the scalar API is a batch of width one, so scalar
and batched generation are bit-identical by construction.
"""

from __future__ import annotations

import numpy as np

_U64 = np.uint64
_GOLDEN = _U64(0x9E3779B97F4A7C15)
_MIX1 = _U64(0xBF58476D1CE4E5B9)
_MIX2 = _U64(0x94D049BB133111EB)
_SH30, _SH27, _SH31 = _U64(30), _U64(27), _U64(31)
_SH17, _SH11 = _U64(17), _U64(11)
_TWO_NEG53 = 2.0 ** -53

# Acklam coefficients; relative error of the approximation < 1.15e-9.
_A = np.array([-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
               1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00])
_B = np.array([-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
               6.680131188771972e+01, -1.328068155288572e+01])
_C = np.array([-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
               -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00])
_D = np.array([7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
               3.754408661907416e+00])
_P_LOW = 0.02425
_P_HIGH = 1.0 - _P_LOW


def _splitmix64_next(state: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    with np.errstate(over="ignore"):
        state = state + _GOLDEN
        z = state
        z = (z ^ (z >> _SH30)) * _MIX1
        z = (z ^ (z >> _SH27)) * _MIX2
        z = z ^ (z >> _SH31)
    return state, z


def _rotl(x: np.ndarray, k: int) -> np.ndarray:
    return (x << _U64(k)) | (x >> _U64(64 - k))


def _initial_states(master_seed: int, stream_indices: np.ndarray) -> np.ndarray:
    idx = np.asarray(stream_indices, dtype=np.uint64)
    _, const = _splitmix64_next(idx)
    state = _U64(master_seed & 0xFFFFFFFFFFFFFFFF) ^ const
    words = []
    for _ in range(4):
        state, out = _splitmix64_next(state)
        words.append(out)
    return np.stack(words)  # shape (4, B)


class RngStreamBatch:
    """B streams with consecutive-or-arbitrary indices, stepped in lockstep.

    ``u64_block(n)`` returns shape (n, B): row i holds output i of every
    stream, exactly equal to n successive scalar draws per stream.
    """

    def __init__(self, master_seed: int, stream_indices) -> None:
        self.master_seed = int(master_seed)
        self.stream_indices = np.asarray(stream_indices, dtype=np.uint64)
        self._s = _initial_states(self.master_seed, self.stream_indices)

    @property
    def width(self) -> int:
        return self._s.shape[1]

    def u64_block(self, n: int) -> np.ndarray:
        if self._s.shape[1] == 1:
            return self._u64_block_width1(n)
        s0, s1, s2, s3 = self._s
        out = np.empty((n, s0.shape[0]), dtype=np.uint64)
        with np.errstate(over="ignore"):
            for i in range(n):
                out[i] = _rotl(s0 + s3, 23) + s0
                t = s1 << _SH17
                s2 = s2 ^ s0
                s3 = s3 ^ s1
                s1 = s1 ^ s2
                s0 = s0 ^ s3
                s2 = s2 ^ t
                s3 = _rotl(s3, 45)
        self._s = np.stack([s0, s1, s2, s3])
        return out

    def _u64_block_width1(self, n: int) -> np.ndarray:
        # plain-int fast path; integer ops are exact, so bits match the
        # vector path (the parity tests cover both)
        mask = 0xFFFFFFFFFFFFFFFF
        s0, s1, s2, s3 = (int(w) for w in self._s[:, 0])
        buf = [0] * n
        for i in range(n):
            x = (s0 + s3) & mask
            buf[i] = ((((x << 23) | (x >> 41)) & mask) + s0) & mask
            t = (s1 << 17) & mask
            s2 ^= s0
            s3 ^= s1
            s1 ^= s2
            s0 ^= s3
            s2 ^= t
            s3 = ((s3 << 45) | (s3 >> 19)) & mask
        self._s = np.array([[s0], [s1], [s2], [s3]], dtype=np.uint64)
        out = np.empty((n, 1), dtype=np.uint64)
        out[:, 0] = buf
        return out

    def uniform_block(self, n: int) -> np.ndarray:
        return (self.u64_block(n) >> _SH11).astype(np.float64) * _TWO_NEG53

    def normal_block(self, n: int) -> np.ndarray:
        u = self.u64_block(n)
        p = ((u >> _SH11).astype(np.float64) + 0.5) * _TWO_NEG53
        return inverse_normal_cdf_array(p)


def inverse_normal_cdf_array(p: np.ndarray) -> np.ndarray:
    """Vectorized Acklam inverse normal CDF; p strictly inside (0, 1)."""
    p = np.asarray(p, dtype=np.float64)
    x = np.empty_like(p)
    lo = p < _P_LOW
    hi = p > _P_HIGH
    mid = ~(lo | hi)
    if lo.any():
        q = np.sqrt(-2.0 * np.log(p[lo]))
        x[lo] = _tail_poly(q)
    if hi.any():
        q = np.sqrt(-2.0 * np.log(1.0 - p[hi]))
        x[hi] = -_tail_poly(q)
    if mid.any():
        q = p[mid] - 0.5
        r = q * q
        num = ((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]
        den = ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
        x[mid] = num * q / den
    return x


def _tail_poly(q: np.ndarray) -> np.ndarray:
    num = ((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]
    den = (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
    return num / den


def inverse_normal_cdf(p: float) -> float:
    if not 0.0 < p < 1.0:
        raise ValueError("p must be strictly inside (0, 1)")
    return float(inverse_normal_cdf_array(np.array([p]))[0])


class RngStream:
    """Single deterministic substream; thin width-1 batch."""

    def __init__(self, master_seed: int, stream_index: int) -> None:
        self._batch = RngStreamBatch(master_seed, [stream_index])
        self.master_seed = int(master_seed)
        self.stream_index = int(stream_index)

    def next_u64(self) -> int:
        return int(self._batch.u64_block(1)[0, 0])

    def next_uniform(self) -> float:
        return float(self._batch.uniform_block(1)[0, 0])

    def next_standard_normal(self) -> float:
        return float(self._batch.normal_block(1)[0, 0])

    def u64s(self, n: int) -> np.ndarray:
        return self._batch.u64_block(n)[:, 0]

    def uniforms(self, n: int) -> np.ndarray:
        return self._batch.uniform_block(n)[:, 0]

    def normals(self, n: int) -> np.ndarray:
        return self._batch.normal_block(n)[:, 0]


def rng_new(master_seed: int, stream_index: int) -> RngStream:
    return RngStream(master_seed, stream_index)


def next_uniform(stream: RngStream) -> float:
    return stream.next_uniform()


def next_standard_normal(stream: RngStream) -> float:
    return stream.next_standard_normal()
