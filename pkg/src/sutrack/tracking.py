"""p-successive-update (p-SU) tracking over a slotted channel.

Every slot carries ``nR`` bits with a one-slot delay. A sample ``X_ks`` is
taken every ``s`` slots; the ``nRs`` bits between samples are split into
``m = s / p`` sub-fragments of ``nRp`` bits. At ``t = ks + jp`` the encoder
quantizes the decoder's current error on ``X_ks`` with an ``nRp``-bit
quantizer and streams the index over the next ``p`` slots. The decoder adds
each fully received reconstruction to its estimate of ``X_ks`` and outputs
``alpha^(t - ks)`` times that estimate. A quantizer failure is latched: the
encoder sends the failure marker forever and the decoder outputs zero.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .arprocess import ProcessParams, Trajectory
from .quantizer import CODEBOOK_CAP, make_quantizer


@dataclass(frozen=True)
class QuantizerSpec:
    """Which operational quantizer to build for each update.

    ``M`` is the dynamic range in coordinate units; ``gain_bits`` only
    applies to ``kind="gain-shape"``, whose shape codebook gets the rest of
    the ``nRp`` bits.
    """

    kind: str = "gain-shape"
    M: float = 8.0
    gain_bits: int = 4
    probe_count: int = 1024
    cap: int = CODEBOOK_CAP

    def build(self, n: int, bits: int, seed=None):
        return make_quantizer(self.kind, n, bits, M=self.M, gain_bits=self.gain_bits,
                              seed=seed, probe_count=self.probe_count, cap=self.cap)


@dataclass(frozen=True)
class TrackingConfig:
    alpha: float
    n: int
    R: float
    s: int
    p: int
    T: int
    sigma2: float = 1.0
    quantizer: QuantizerSpec = field(default_factory=QuantizerSpec)

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.s < 1 or not 1 <= self.p <= self.s or self.s % self.p:
            raise ValueError(f"update period p={self.p} must divide sampling period s={self.s}")
        if self.T < 1:
            raise ValueError("horizon T must be >= 1")
        if not self.R > 0:
            raise ValueError("rate must be positive")
        nr = self.n * self.R
        if abs(nr - round(nr)) > 1e-9:
            raise ValueError(f"n*R = {nr} must be a whole number of bits per slot")

    @classmethod
    def for_process(cls, params: ProcessParams, **kw) -> "TrackingConfig":
        return cls(alpha=params.alpha, n=params.n, sigma2=params.sigma2, **kw)

    @property
    def m(self) -> int:
        return self.s // self.p

    @property
    def slot_bits(self) -> int:
        return int(round(self.n * self.R))

    @property
    def update_bits(self) -> int:
        return self.slot_bits * self.p

    def build_quantizer(self, seed=None):
        return self.quantizer.build(self.n, self.update_bits, seed)


@dataclass(frozen=True)
class SlotMessage:
    """One slot of ``width`` bits, or the failure marker when ``payload`` is None."""

    payload: int | None
    width: int

    @property
    def failure(self) -> bool:
        return self.payload is None


def split_index(index: int, chunks: int, width: int) -> list[int]:
    """Big-endian split of ``index`` into ``chunks`` fields of ``width`` bits."""
    if index >> (chunks * width):
        raise ValueError(f"index {index} does not fit in {chunks * width} bits")
    mask = (1 << width) - 1
    return [(index >> (width * (chunks - 1 - c))) & mask for c in range(chunks)]


def join_index(parts, width: int) -> int:
    index = 0
    for part in parts:
        index = (index << width) | part
    return index


class Decoder:
    """Receiver state machine; also run inside the encoder as its shadow."""

    def __init__(self, quantizer, alpha: float, s: int, p: int, slot_bits: int):
        self.quantizer = quantizer
        self.s, self.p, self.slot_bits = s, p, slot_bits
        self._powers = [alpha**i for i in range(s + 1)]
        self.ref = 0  # ks, the latest sample index times s
        self.estimate = np.zeros(quantizer.n)  # estimate of X_ks
        self.failed = False
        self._chunks: list[int] = []

    def tick(self, t: int, msg: SlotMessage | None) -> np.ndarray:
        """Consume the message sent at ``t - 1`` and return the estimate of ``X_t``."""
        if self.failed:
            return np.zeros_like(self.estimate)
        if msg is not None:
            if msg.failure:
                self.failed = True
                self.estimate = np.zeros_like(self.estimate)
                self._chunks.clear()
                return self.estimate.copy()
            if msg.width != self.slot_bits or not 0 <= msg.payload < (1 << msg.width):
                raise ValueError(f"malformed slot message {msg!r}, expected {self.slot_bits} bits")
            self._chunks.append(msg.payload)
            if len(self._chunks) == self.p:
                index = join_index(self._chunks, self.slot_bits)
                self._chunks.clear()
                self.estimate = self.estimate + self.quantizer.decode(index)
        if t > 0 and t % self.s == 0:
            self.estimate = self._powers[self.s] * self.estimate
            self.ref = t
        return self._powers[t - self.ref] * self.estimate


class Encoder:
    """Sender state machine with an embedded shadow decoder."""

    def __init__(self, quantizer, alpha: float, s: int, p: int, slot_bits: int):
        if quantizer.bits > slot_bits * p:
            raise ValueError(f"{quantizer.bits}-bit quantizer exceeds the {slot_bits * p}-bit sub-fragment")
        self.quantizer = quantizer
        self.s, self.p, self.slot_bits = s, p, slot_bits
        self.shadow = Decoder(quantizer, alpha, s, p, slot_bits)
        self.k = 0
        self.j = 0
        self.failed = False
        self.tau: int | None = None
        self.pending: deque[int] = deque()
        self._last: SlotMessage | None = None

    def tick(self, t: int, latest_sample: np.ndarray) -> SlotMessage:
        """Emit the slot sent at ``t``; ``latest_sample`` must be ``X_ks`` for ``ks <= t``."""
        self.shadow.tick(t, self._last)
        if not self.failed and t % self.p == 0:
            self.k, r = divmod(t, self.s)
            self.j = r // self.p
            out = self.quantizer.quantize(latest_sample - self.shadow.estimate)
            if out.failed:
                self.failed = True
                self.tau = t
                self.pending.clear()
            else:
                # short indices are zero-padded in the high bits
                self.pending.extend(split_index(out.index, self.p, self.slot_bits))
        if self.failed:
            msg = SlotMessage(None, self.slot_bits)
        else:
            msg = SlotMessage(self.pending.popleft(), self.slot_bits)
        self._last = msg
        return msg


@dataclass
class TrialResult:
    seed: int | None
    tau: int | None
    dbar: float
    delta_hat: float
    per_t_error: np.ndarray = field(repr=False)

    @property
    def failed(self) -> bool:
        return self.tau is not None

    def to_dict(self, include_trace: bool = False) -> dict:
        d = {"seed": self.seed, "tau": self.tau, "dbar": self.dbar,
             "delta_hat": self.delta_hat, "failed": self.failed}
        if include_trace:
            d["per_t_error"] = self.per_t_error.tolist()
        return d

    def to_json(self, include_trace: bool = False, **extra) -> str:
        return json.dumps({**extra, **self.to_dict(include_trace)}, sort_keys=True)


def run_tracking(traj: Trajectory, cfg: TrackingConfig, seed=None, *, quantizer=None,
                 check_shadow: bool = False) -> TrialResult:
    """Simulate encoder and decoder in lockstep over ``t = 0 .. T-1``.

    ``seed`` drives the quantizer's shared randomness; pass ``quantizer`` to
    reuse a prebuilt one instead.
    """
    if traj.T < cfg.T:
        raise ValueError(f"trajectory has {traj.T} steps, config needs {cfg.T}")
    if traj.n != cfg.n:
        raise ValueError(f"trajectory dimension {traj.n} != config dimension {cfg.n}")
    q = quantizer if quantizer is not None else cfg.build_quantizer(seed)
    enc = Encoder(q, cfg.alpha, cfg.s, cfg.p, cfg.slot_bits)
    dec = Decoder(q, cfg.alpha, cfg.s, cfg.p, cfg.slot_bits)
    X = traj.values
    s = cfg.s
    est = np.empty((cfg.T, cfg.n))
    msg = None
    for t in range(cfg.T):
        est[t] = dec.tick(t, msg)
        msg = enc.tick(t, X[t - t % s])
        if check_shadow and not np.array_equal(enc.shadow.estimate, dec.estimate):
            raise AssertionError(f"shadow decoder diverged at t={t}")
    diff = X[: cfg.T] - est
    err = np.einsum("tn,tn->t", diff, diff) / cfg.n
    dbar = float(err.mean())
    return TrialResult(seed=seed, tau=enc.tau, dbar=dbar, delta_hat=1.0 - dbar / cfg.sigma2, per_t_error=err)

