"""(theta, eps)-quantizers with a dynamic range and a failure symbol.

A quantizer with dynamic range ``M`` accepts ``y`` in R^n with
``||y||^2 <= n M^2`` and returns an index plus a reconstruction; outside that
ball it returns :data:`FAILURE`. Its quality is summarised by a
:class:`QuantizerProfile`: ``E||y - Q(y)||^2 <= ||y||^2 theta(R) + n eps^2``.

Concrete quantizers:

* :class:`GainShapeQuantizer` - uniform gain cells on ``[0, M]`` times a random
  spherical shape codebook whose decoded codewords are shrunk by an
  empirically calibrated scale.
* :class:`UniformQuantizer` - coordinate-wise uniform cells on
  ``[-M sqrt(n), M sqrt(n)]`` with midpoint reconstruction.
* :class:`LosslessQuantizer` - a test double with zero error.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

CODEBOOK_CAP = 2**20
UNIT_TOL = 1e-9
ENVELOPE_SE = 2.0  # shell means may exceed the fitted bound by this many standard errors


class BudgetError(ValueError):
    """A requested bit budget cannot be realised."""


@dataclass(frozen=True)
class QuantizerOutput:
    index: int | None
    value: np.ndarray | None

    @property
    def failed(self) -> bool:
        return self.index is None


#: The failure symbol returned when the input lies outside the dynamic range.
FAILURE = QuantizerOutput(None, None)


@dataclass(frozen=True)
class QuantizerProfile:
    """Analytic description ``(theta(R), eps, M)`` of a quantizer family.

    ``theta`` maps a per-dimension rate to ``[0, 1]``. Profiles fitted from
    measurements carry a constant ``theta`` that is only meaningful at the
    rate they were measured at.
    """

    theta: Callable[[float], float]
    eps: float
    M: float = math.inf
    bits_total: int | None = None
    name: str = "custom"

    def __post_init__(self):
        if self.eps < 0:
            raise ValueError("eps must be nonnegative")
        if not self.M > 0:
            raise ValueError("M must be positive")


# ---------------------------------------------------------------------------
# shape codebooks


@dataclass(frozen=True, eq=False)
class ShapeCodebook:
    vectors: np.ndarray  # (2**b, n), unit rows
    b: int
    scale: float
    seed: int | None = None
    shape_distortion: float = float("nan")  # probe mean of 1 - <y, nearest>^2

    def __post_init__(self):
        norms = np.linalg.norm(self.vectors, axis=1)
        if np.any(np.abs(norms - 1.0) > UNIT_TOL):
            raise ValueError("codebook vectors must have unit norm")
        if not 0.0 < self.scale <= 1.0:
            raise ValueError(f"scale must lie in (0, 1], got {self.scale}")
        self.vectors.setflags(write=False)

    @property
    def n(self) -> int:
        return self.vectors.shape[1]

    @property
    def size(self) -> int:
        return self.vectors.shape[0]


def _random_unit(rng, count, n) -> np.ndarray:
    if n == 1:
        return np.where(rng.random((count, 1)) < 0.5, -1.0, 1.0)
    v = rng.standard_normal((count, n))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _max_inner(vectors, probes, chunk_elems=1 << 22) -> np.ndarray:
    rows = max(1, chunk_elems // vectors.shape[0])
    out = np.empty(probes.shape[0])
    for lo in range(0, probes.shape[0], rows):
        out[lo : lo + rows] = np.max(probes[lo : lo + rows] @ vectors.T, axis=1)
    return out


def build_shape_codebook(n: int, b: int, seed=None, probe_count: int = 1024, cap: int = CODEBOOK_CAP) -> ShapeCodebook:
    """Draw ``2**b`` iid uniform unit vectors and calibrate the decode scale.

    The scale is the probe mean of the best inner product, which is the MMSE
    scalar for reconstructing a uniform unit vector from its nearest codeword.
    In one dimension the codebook is ``{+1, -1}`` (repeated if ``b > 1``).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if b < 0:
        raise ValueError("shape bits must be >= 0")
    if 2**b > cap:
        raise BudgetError(f"codebook of 2^{b} vectors exceeds the cap of {cap} vectors")
    rng = np.random.default_rng(seed)
    if n == 1:
        vectors = np.resize(np.array([[1.0], [-1.0]]), (2**b, 1))
    else:
        vectors = _random_unit(rng, 2**b, n)
    probes = _random_unit(rng, probe_count, n)
    best = _max_inner(vectors, probes)
    scale = float(np.clip(np.mean(best), np.finfo(float).tiny, 1.0))
    distortion = float(np.mean(1.0 - best**2))
    return ShapeCodebook(vectors=vectors, b=b, scale=scale, seed=seed, shape_distortion=distortion)


def encode_shape(cb: ShapeCodebook, y_s) -> int:
    """Index of the codeword with the largest inner product (lowest index on ties)."""
    y_s = np.asarray(y_s, dtype=float)
    if abs(math.sqrt(float(y_s @ y_s)) - 1.0) > UNIT_TOL:
        raise ValueError("shape input must be a unit vector")
    return int(np.argmax(cb.vectors @ y_s))


def decode_shape(cb: ShapeCodebook, index: int) -> np.ndarray:
    if not 0 <= index < cb.size:
        raise ValueError(f"shape index {index} out of range [0, {cb.size})")
    return cb.scale * cb.vectors[index]


def save_codebook(cb: ShapeCodebook, path) -> None:
    """JSON header (length-prefixed u32) followed by the little-endian float64 vectors."""
    header = json.dumps({"n": cb.n, "b": cb.b, "scale": cb.scale, "seed": cb.seed,
                         "shape_distortion": cb.shape_distortion}, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(np.ascontiguousarray(cb.vectors, dtype="<f8").tobytes())


def load_codebook(path) -> ShapeCodebook:
    raw = Path(path).read_bytes()
    (size,) = struct.unpack_from("<I", raw)
    header = json.loads(raw[4 : 4 + size])
    count = 2 ** header["b"] * header["n"]
    vectors = np.frombuffer(raw, dtype="<f8", offset=4 + size, count=count).reshape(-1, header["n"]).copy()
    return ShapeCodebook(vectors=vectors, b=header["b"], scale=header["scale"], seed=header["seed"],
                         shape_distortion=header["shape_distortion"])


# ---------------------------------------------------------------------------
# gain, gain-shape and uniform quantizers


def quantize_gain(a: float, M: float, l: int) -> tuple[int, float]:
    """Floor quantizer on ``[0, M]`` with ``2**l`` cells; ``a == M`` lands in the top cell."""
    if a < 0 or a > M:
        raise ValueError(f"gain {a} outside [0, {M}]")
    step = M * 2.0**-l
    index = min(int(a // step), 2**l - 1)
    return index, index * step


def gain_shape_quantize(y, cb: ShapeCodebook, M: float, l: int) -> QuantizerOutput:
    """``sqrt(n) * q_M(||y|| / sqrt(n)) * decode_shape(encode_shape(y / ||y||))``.

    The index packs the gain cell in the high ``l`` bits and the shape index in
    the low ``b`` bits.
    """
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    sq = float(y @ y)
    if sq > n * M * M:
        return FAILURE
    if sq == 0.0:
        return QuantizerOutput(0, np.zeros(n))
    norm = math.sqrt(sq)
    gi, gv = quantize_gain(min(norm / math.sqrt(n), M), M, l)
    si = encode_shape(cb, y / norm)
    return QuantizerOutput((gi << cb.b) | si, math.sqrt(n) * gv * decode_shape(cb, si))


def _coordinate_bits(n: int, bits) -> np.ndarray:
    bits = np.broadcast_to(np.asarray(bits, dtype=int), (n,))
    if np.any(bits < 0):
        raise ValueError("bits per coordinate must be nonnegative")
    return bits


def uniform_vector_quantize(y, M: float, R) -> QuantizerOutput:
    """Midpoint quantizer with ``2**R`` cells of ``[-M sqrt(n), M sqrt(n)]`` per coordinate.

    ``R`` is an integer or a per-coordinate integer array. Cell indices are
    concatenated with coordinate 0 in the most significant bits.
    """
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    if float(y @ y) > n * M * M:
        return FAILURE
    bits = _coordinate_bits(n, R)
    half = M * math.sqrt(n)
    cells = 2**bits
    width = 2.0 * half / cells
    idx = np.clip(np.floor((y + half) / width), 0, cells - 1).astype(np.int64)
    value = -half + (idx + 0.5) * width
    index = 0
    for c, b in zip(idx.tolist(), bits.tolist()):
        index = (index << b) | c
    return QuantizerOutput(index, value)


class GainShapeQuantizer:
    """Gain-shape quantizer built on a shared :class:`ShapeCodebook`."""

    kind = "gain-shape"

    def __init__(self, codebook: ShapeCodebook, M: float, gain_bits: int):
        if gain_bits < 0:
            raise ValueError("gain_bits must be >= 0")
        self.codebook = codebook
        self.M = float(M)
        self.gain_bits = int(gain_bits)
        self.n = codebook.n
        self.bits = self.gain_bits + codebook.b
        self._bound = self.n * self.M**2
        self._step = self.M * 2.0**-self.gain_bits
        self._root_n = math.sqrt(self.n)
        self._mask = (1 << codebook.b) - 1

    def quantize(self, y: np.ndarray) -> QuantizerOutput:
        # inlined gain_shape_quantize; test_quantizer checks both agree
        sq = float(y @ y)
        if sq > self._bound:
            return FAILURE
        if sq == 0.0:
            return QuantizerOutput(0, np.zeros(self.n))
        norm = math.sqrt(sq)
        gi = min(int(min(norm / self._root_n, self.M) // self._step), (1 << self.gain_bits) - 1)
        si = int(np.argmax(self.codebook.vectors @ (y / norm)))
        index = (gi << self.codebook.b) | si
        return QuantizerOutput(index, self.decode(index))

    def decode(self, index: int) -> np.ndarray:
        gi, si = index >> self.codebook.b, index & self._mask
        return (self._root_n * gi * self._step) * decode_shape(self.codebook, si)


class UniformQuantizer:
    """Coordinate-wise uniform quantizer spending ``bits`` over ``n`` coordinates.

    When ``bits`` is not a multiple of ``n`` the first ``bits % n`` coordinates
    get one extra bit.
    """

    kind = "uniform"

    def __init__(self, n: int, M: float, bits: int):
        self.n = int(n)
        self.M = float(M)
        self.bits = int(bits)
        base, extra = divmod(self.bits, self.n)
        self.coord_bits = np.array([base + (i < extra) for i in range(self.n)], dtype=int)
        self._half = self.M * math.sqrt(self.n)
        self._width = 2.0 * self._half / 2.0**self.coord_bits

    def quantize(self, y: np.ndarray) -> QuantizerOutput:
        return uniform_vector_quantize(y, self.M, self.coord_bits)

    def decode(self, index: int) -> np.ndarray:
        idx = np.empty(self.n)
        for i in range(self.n - 1, -1, -1):
            b = int(self.coord_bits[i])
            idx[i] = index & ((1 << b) - 1)
            index >>= b
        return -self._half + (idx + 0.5) * self._width


class LosslessQuantizer:
    """Zero-error test double.

    Reconstructions travel through a side table keyed by the transmitted
    index, so it only works when encoder and decoder share the instance.
    """

    kind = "lossless"

    def __init__(self, n: int, bits: int, M: float = math.inf):
        self.n = int(n)
        self.bits = int(bits)
        self.M = M
        self._table: dict[int, np.ndarray] = {}
        self._next = 0

    def quantize(self, y: np.ndarray) -> QuantizerOutput:
        y = np.array(y, dtype=float)
        if float(y @ y) > self.n * self.M**2:
            return FAILURE
        index = self._next
        self._next = (self._next + 1) % (1 << self.bits)
        self._table[index] = y
        return QuantizerOutput(index, y)

    def decode(self, index: int) -> np.ndarray:
        return self._table[index]


def check_budget(kind: str, bits: int, gain_bits: int = 0, cap: int = CODEBOOK_CAP) -> None:
    """Raise :class:`BudgetError` if a ``bits``-bit quantizer of ``kind`` is infeasible."""
    if bits < 1:
        raise BudgetError(f"quantizer needs at least one bit, got {bits}")
    if kind == "gain-shape":
        shape_bits = bits - gain_bits
        if shape_bits < 1:
            raise BudgetError(f"{bits} bits leave no shape bits after {gain_bits} gain bits")
        if 2**shape_bits > cap:
            raise BudgetError(f"codebook of 2^{shape_bits} vectors exceeds the cap of {cap} vectors")


def make_quantizer(kind: str, n: int, bits: int, *, M: float = math.inf, gain_bits: int = 0,
                   seed=None, probe_count: int = 1024, cap: int = CODEBOOK_CAP):
    """Build an ``bits``-bit quantizer for R^n; ``seed`` drives any shared randomness."""
    check_budget(kind, bits, gain_bits, cap)
    if kind == "gain-shape":
        shape_bits = bits - gain_bits
        if not math.isfinite(M):
            raise ValueError("gain-shape quantizer needs a finite dynamic range M")
        cb = build_shape_codebook(n, shape_bits, seed=seed, probe_count=probe_count, cap=cap)
        return GainShapeQuantizer(cb, M, gain_bits)
    if kind == "uniform":
        if not math.isfinite(M):
            raise ValueError("uniform quantizer needs a finite dynamic range M")
        return UniformQuantizer(n, M, bits)
    if kind == "lossless":
        return LosslessQuantizer(n, bits, M)
    raise ValueError(f"unknown quantizer kind {kind!r}")


# ---------------------------------------------------------------------------
# empirical profiling


@dataclass(frozen=True)
class ProfileFit:
    """Fitted ``(theta, eps)`` plus the per-shell measurements behind it."""

    theta: float
    eps: float
    n: int
    norms: np.ndarray = field(repr=False)
    mean_error: np.ndarray = field(repr=False)
    std_error: np.ndarray = field(repr=False)
    degenerate: bool = False

    def bound(self, norm) -> np.ndarray:
        norm = np.asarray(norm, dtype=float)
        return norm**2 * self.theta + self.n * self.eps**2

    def as_profile(self, M: float, bits_total: int | None = None) -> QuantizerProfile:
        theta = self.theta
        return QuantizerProfile(theta=lambda R: theta, eps=self.eps, M=M, bits_total=bits_total, name="measured")


def profile_quantizer(q, M: float, norm_grid, trials: int = 200, seed=None, n: int | None = None) -> ProfileFit:
    """Measure mean squared error on norm shells and fit ``theta rho^2 + n eps^2``.

    ``q`` is a quantizer object or a plain callable ``y -> reconstruction``.
    Both coefficients come from least squares, with the slope clamped to
    ``[0, 1]``. The intercept is then raised just enough for the line to
    cover every shell mean within ``ENVELOPE_SE`` standard errors, since the
    contract is an upper bound and the error curve need not be linear in
    ``|y|^2``.
    """
    if n is None:
        n = q.n
    grid = np.atleast_1d(np.asarray(norm_grid, dtype=float))
    if np.any(grid <= 0) or np.any(grid > math.sqrt(n) * M * (1 + 1e-12)):
        raise ValueError("norm grid must lie in (0, sqrt(n) M]")
    quantize = q.quantize if hasattr(q, "quantize") else None
    rng = np.random.default_rng(seed)
    means = np.empty(grid.size)
    ses = np.empty(grid.size)
    top = math.sqrt(n) * M * (1 - 1e-12)  # keep rounding inside the dynamic range
    for i, rho in enumerate(grid):
        ys = min(rho, top) * _random_unit(rng, trials, n)
        errs = np.empty(trials)
        for t, y in enumerate(ys):
            if quantize is not None:
                out = quantize(y)
                if out.failed:
                    raise ValueError(f"quantizer failed inside its dynamic range at norm {rho}")
                rec = out.value
            else:
                rec = np.asarray(q(y), dtype=float)
            d = y - rec
            errs[t] = d @ d
        means[i] = errs.mean()
        ses[i] = errs.std(ddof=1) / math.sqrt(trials) if trials > 1 else 0.0

    x = grid**2
    degenerate = grid.size == 1
    if degenerate:
        slope, intercept = means[0] / x[0], 0.0
    else:
        A = np.column_stack([x, np.ones_like(x)])
        (slope, intercept), *_ = np.linalg.lstsq(A, means, rcond=None)
    theta = float(np.clip(slope, 0.0, 1.0))
    if not degenerate:
        # refit the intercept for the clamped slope, then lift it over any shell
        # mean the line misses by more than ENVELOPE_SE standard errors
        intercept = float(np.mean(means - theta * x)) if theta != slope else float(intercept)
        intercept = max(intercept, float(np.max(means - theta * x - ENVELOPE_SE * ses)), 0.0)
    eps = math.sqrt(intercept / n)
    return ProfileFit(theta=theta, eps=eps, n=n, norms=grid, mean_error=means, std_error=ses, degenerate=degenerate)
