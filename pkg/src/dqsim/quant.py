"""Element-wise uniform stochastic gradient quantization and its wire codec.

A gradient vector is compressed by transmitting its l_p norm at full float
precision plus, per coordinate, one sign bit and a (b-1)-bit level index into
a uniform grid of s = 2**(b-1) - 1 steps.  The level is drawn stochastically
so that dequantization is unbiased.  A separate 1-bit-per-coordinate sign
codec with mean-absolute-value scaling is provided as the aggressive
baseline.

All randomness comes from caller-supplied numpy Generators, so every
operation here is pure and safe to run concurrently with distinct streams.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GradientVector",
    "QuantizerConfig",
    "QuantizedGradient",
    "VarianceBudget",
    "FramingError",
    "CorruptionError",
    "lp_norm",
    "quantize",
    "dequantize",
    "dequantized_draws",
    "sign_quantize",
    "encode",
    "decode",
    "frame_bytes",
    "variance_bound",
    "aggregate_stats",
]


class FramingError(ValueError):
    """Encoded frame has the wrong length for the declared (d, bits, b_pre)."""


class CorruptionError(ValueError):
    """Decoded frame contains field values no encoder could have produced."""


def lp_norm(values: np.ndarray, p: float) -> float:
    """l_p norm of a 1-D vector; p may be any positive real or inf."""
    if not p > 0:
        raise ValueError(f"norm order must be positive, got {p}")
    return float(np.linalg.norm(values, ord=p))


@dataclass(frozen=True, eq=False)
class GradientVector:
    """Dense gradient of dimension d with its l_p norm cached at construction.

    The cached norm uses numpy's pairwise-summation accumulators and is
    accurate to a few ulp of the exact value.
    """

    values: np.ndarray
    p: float = 2.0
    cached_norm: float = field(init=False)

    def __post_init__(self):
        values = np.atleast_1d(np.asarray(self.values, dtype=np.float64))
        if values.ndim != 1 or values.size < 1:
            raise ValueError("gradient must be a 1-D vector with d >= 1")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "cached_norm", lp_norm(values, self.p))

    @property
    def d(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class QuantizerConfig:
    """Codec parameters: bit width b, norm order p, and norm precision b_pre.

    bits >= 2 selects the uniform stochastic codec with s = 2**(b-1) - 1
    levels.  bits == 1 is reserved for the sign codec (see sign_quantize);
    the uniform quantizer rejects it because s would be 0.
    """

    bits: int
    p: float = 2.0
    b_pre: int = 32

    def __post_init__(self):
        if not isinstance(self.bits, int) or not 1 <= self.bits <= 32:
            raise ValueError(f"bits must be an integer in [1, 32], got {self.bits}")
        if self.b_pre not in (32, 64):
            raise ValueError(f"b_pre must be 32 or 64, got {self.b_pre}")
        if not self.p > 0:
            raise ValueError(f"norm order must be positive, got {self.p}")

    @classmethod
    def sign_only(cls, p: float = 2.0, b_pre: int = 32) -> "QuantizerConfig":
        return cls(bits=1, p=p, b_pre=b_pre)

    @property
    def is_sign_only(self) -> bool:
        return self.bits == 1

    @property
    def levels(self) -> int:
        """Level count s = 2**(bits-1) - 1 of the uniform grid."""
        if self.bits < 2:
            raise ValueError("sign-only config has no uniform level count")
        return (1 << (self.bits - 1)) - 1


@dataclass(eq=False)
class QuantizedGradient:
    """The wire unit: a norm scalar plus per-coordinate sign and level index.

    For bits >= 2 the dequantized coordinate j is norm * sign_j * level_j / s
    with s = 2**(bits-1) - 1.  For the sign codec (bits == 1) every level is
    1 and norm holds the mean-absolute-value scale, so the same formula
    applies with s = 1.  The norm is stored already rounded to the b_pre wire
    precision, which is what makes decode(encode(q)) an exact identity.
    """

    norm: float
    signs: np.ndarray  # int8, each +1 or -1
    levels: np.ndarray  # uint32, each in [0, s]
    bits: int
    b_pre: int = 32

    def __post_init__(self):
        self.signs = np.asarray(self.signs, dtype=np.int8)
        self.levels = np.asarray(self.levels, dtype=np.uint32)
        if self.signs.shape != self.levels.shape or self.signs.ndim != 1:
            raise ValueError("signs and levels must be 1-D arrays of equal length")
        if self.signs.size < 1:
            raise ValueError("empty quantized gradient")
        if not (math.isfinite(self.norm) and self.norm >= 0.0):
            raise ValueError(f"norm must be finite and nonnegative, got {self.norm}")
        if not 1 <= self.bits <= 32:
            raise ValueError(f"bits must be in [1, 32], got {self.bits}")
        if self.b_pre not in (32, 64):
            raise ValueError(f"b_pre must be 32 or 64, got {self.b_pre}")
        if np.any(self.levels > self.level_count):
            raise ValueError("level index exceeds the grid size s")
        if not np.all(np.abs(self.signs) == 1):
            raise ValueError("signs must be +1 or -1")

    @classmethod
    def _trusted(cls, norm, signs, levels, bits, b_pre) -> "QuantizedGradient":
        # fast path for quantize/decode, whose outputs are well-formed by
        # construction; the public constructor validates everything
        obj = object.__new__(cls)
        obj.norm = norm
        obj.signs = signs
        obj.levels = levels
        obj.bits = bits
        obj.b_pre = b_pre
        return obj

    @property
    def d(self) -> int:
        return self.levels.size

    @property
    def level_count(self) -> int:
        """Grid size s used by the dequantization formula (1 for sign codec)."""
        if self.bits == 1:
            return 1
        return (1 << (self.bits - 1)) - 1

    @property
    def encoded_bits(self) -> int:
        """Exact payload size in bits before byte padding: d*bits + b_pre."""
        return self.d * self.bits + self.b_pre


@dataclass(frozen=True)
class VarianceBudget:
    """The two additive noise contributions to the aggregated gradient.

    sampling_term is sigma**2 / W; quantization_term is
    d * gbar**2 / (4 W (2**(b-1) - 1)**2).  Their sum bounds the trace of the
    aggregate's covariance.
    """

    sampling_term: float
    quantization_term: float

    def __post_init__(self):
        if self.sampling_term < 0 or self.quantization_term < 0:
            raise ValueError("variance terms must be nonnegative")

    @classmethod
    def for_aggregate(
        cls, sigma: float, W: int, d: int, gbar: float, bits: int
    ) -> "VarianceBudget":
        if bits < 2:
            raise ValueError("quantization term needs bits >= 2")
        if W < 1:
            raise ValueError("need at least one worker")
        s = (1 << (bits - 1)) - 1
        return cls(
            sampling_term=sigma * sigma / W,
            quantization_term=d * gbar * gbar / (4.0 * W * s * s),
        )

    @property
    def total(self) -> float:
        return self.sampling_term + self.quantization_term


def _wire_norm(value: float, b_pre: int) -> float:
    # The transmitted norm only has b_pre bits; rounding here (rather than in
    # encode) keeps the in-memory object identical to its wire round-trip.
    if b_pre == 32:
        return float(np.float32(value))
    return float(value)


def _prepare(g: GradientVector, cfg: QuantizerConfig):
    """Shared setup for single and batched quantization draws.

    Returns (norm, signs, low, frac) where low + Bernoulli(frac) is the level.
    """
    s = cfg.levels
    values = g.values
    if not np.all(np.isfinite(values)):
        raise ValueError("gradient has a non-finite coordinate")
    # sign of an exact zero is fixed to +1; the level there is 0 anyway
    signs = np.where(values < 0, -1, 1).astype(np.int8)
    norm = g.cached_norm if g.p == cfg.p else lp_norm(values, cfg.p)
    norm = _wire_norm(norm, cfg.b_pre)
    if not math.isfinite(norm):
        raise ValueError("gradient norm overflows the wire precision")
    if norm == 0.0:
        zeros = np.zeros(values.size)
        return norm, signs, zeros, zeros
    # multiply by s before dividing so ratios that sit exactly on a grid
    # point stay exact and round deterministically (frac == 0)
    scaled = (s * np.abs(values)) / norm
    np.clip(scaled, 0.0, float(s), out=scaled)
    low = np.floor(scaled)
    frac = scaled - low
    return norm, signs, low, frac


def quantize(
    g: GradientVector, cfg: QuantizerConfig, rng: np.random.Generator
) -> QuantizedGradient:
    """Stochastically quantize g onto the uniform grid scaled by its norm.

    A coordinate whose magnitude ratio lies in [l/s, (l+1)/s) maps to level
    l+1 with probability s*|g_j|/norm - l and to l otherwise, which makes
    dequantization unbiased.  A zero-norm input short-circuits to all-zero
    levels without evaluating the ratio.
    """
    if cfg.is_sign_only:
        raise ValueError("sign-only config: use sign_quantize")
    norm, signs, low, frac = _prepare(g, cfg)
    u = rng.random(g.d)
    levels = (low + (u < frac)).astype(np.uint32)
    return QuantizedGradient._trusted(norm, signs, levels, cfg.bits, cfg.b_pre)


def dequantized_draws(
    g: GradientVector, cfg: QuantizerConfig, rng: np.random.Generator, n: int
) -> np.ndarray:
    """n independent quantize->dequantize draws of g, as an (n, d) array.

    Statistically identical to stacking n quantize/dequantize round trips;
    batched here so Monte-Carlo checks over 1e5+ draws stay cheap.
    """
    if cfg.is_sign_only:
        raise ValueError("sign-only config: use sign_quantize")
    norm, signs, low, frac = _prepare(g, cfg)
    u = rng.random((n, g.d))
    levels = low + (u < frac)
    return ((norm * signs) * levels) / cfg.levels


def _dequantize_values(q: QuantizedGradient) -> np.ndarray:
    return (q.norm * q.signs.astype(np.float64) * q.levels) / q.level_count


def dequantize(q: QuantizedGradient) -> GradientVector:
    """Deterministic inverse map: values_j = norm * sign_j * level_j / s."""
    return GradientVector(_dequantize_values(q))


def sign_quantize(g: GradientVector, b_pre: int = 32) -> QuantizedGradient:
    """1-bit-per-coordinate codec: transmit signs plus a mean-|g| scale.

    Dequantizes to (||g||_1 / d) * sign(g_j), preserving the average
    magnitude.  Deterministic; costs d + b_pre bits per frame.
    """
    values = g.values
    if not np.all(np.isfinite(values)):
        raise ValueError("gradient has a non-finite coordinate")
    signs = np.where(values < 0, -1, 1).astype(np.int8)
    scale = _wire_norm(float(np.sum(np.abs(values))) / g.d, b_pre)
    levels = np.ones(g.d, dtype=np.uint32)
    return QuantizedGradient._trusted(scale, signs, levels, 1, b_pre)


def frame_bytes(d: int, bits: int, b_pre: int) -> int:
    """Frame length in bytes: b_pre/8 header + ceil(d*bits/8) payload."""
    return b_pre // 8 + (d * bits + 7) // 8


def encode(q: QuantizedGradient) -> bytes:
    """Pack q into its exact bit layout.

    Layout: the norm as a big-endian b_pre-bit IEEE float, then for each
    coordinate one sign bit (1 = negative) followed by bits-1 level bits,
    most significant bit first, zero-padded to a whole byte at the end.
    """
    b = q.bits
    if np.any(q.levels > q.level_count):
        raise ValueError("level index exceeds the grid size s")
    if q.b_pre == 32:
        header = struct.pack(">f", q.norm)
    else:
        header = struct.pack(">d", q.norm)
    sign_bits = (q.signs < 0).astype(np.uint32)
    if b == 1:
        bitstream = sign_bits.astype(np.uint8)
    else:
        codes = (sign_bits << (b - 1)) | q.levels
        shifts = np.arange(b - 1, -1, -1, dtype=np.uint32)
        bitstream = ((codes[:, None] >> shifts) & 1).astype(np.uint8).ravel()
    return header + np.packbits(bitstream).tobytes()


def decode(data: bytes, d: int, cfg: QuantizerConfig) -> QuantizedGradient:
    """Exact inverse of encode; padding bits are ignored.

    Raises FramingError on a length mismatch and CorruptionError when the
    decoded fields could not have come from a well-formed frame.
    """
    b = cfg.bits
    expected = frame_bytes(d, b, cfg.b_pre)
    if len(data) != expected:
        raise FramingError(
            f"frame is {len(data)} bytes, expected {expected} for d={d}, "
            f"bits={b}, b_pre={cfg.b_pre}"
        )
    nb = cfg.b_pre // 8
    if cfg.b_pre == 32:
        norm = float(struct.unpack(">f", data[:nb])[0])
    else:
        norm = float(struct.unpack(">d", data[:nb])[0])
    if not (math.isfinite(norm) and norm >= 0.0):
        raise CorruptionError(f"decoded norm {norm} is not a valid scale")
    raw = np.frombuffer(data[nb:], dtype=np.uint8)
    bitstream = np.unpackbits(raw)[: d * b].reshape(d, b)
    signs = np.where(bitstream[:, 0] == 1, -1, 1).astype(np.int8)
    if b == 1:
        levels = np.ones(d, dtype=np.uint32)
    else:
        weights = 1 << np.arange(b - 2, -1, -1, dtype=np.uint64)
        levels = (bitstream[:, 1:].astype(np.uint64) @ weights).astype(np.uint32)
        if np.any(levels > cfg.levels):
            raise CorruptionError("decoded level index exceeds the grid size s")
    return QuantizedGradient._trusted(norm, signs, levels, b, cfg.b_pre)


def variance_bound(cfg: QuantizerConfig, g: GradientVector) -> float:
    """Worst-case trace of the single-vector quantization covariance.

    Equals d * ||g||_p**2 / (4 s**2); the per-coordinate Bernoulli variance
    is at most (1/4) (norm/s)**2.
    """
    s = cfg.levels
    norm = g.cached_norm if g.p == cfg.p else lp_norm(g.values, cfg.p)
    return g.d * norm * norm / (4.0 * s * s)


def aggregate_stats(gs: list[GradientVector], W: int | None = None) -> float:
    """Root-mean-square of the workers' gradient norms (the scale statistic
    that drives dynamic bit allocation)."""
    if not gs:
        raise ValueError("aggregate_stats needs at least one gradient")
    if W is not None and len(gs) != W:
        raise ValueError(f"expected {W} gradients, got {len(gs)}")
    return math.sqrt(sum(g.cached_norm**2 for g in gs) / len(gs))
