"""AR[1] processes in R^n: generation, subsampling and moment estimates.

The process evolves as ``X_t = alpha * X_{t-1} + xi_t`` with iid zero-mean
innovations of per-coordinate variance ``sigma2 * (1 - alpha**2)``, started
from a zero-mean ``X_0`` of per-coordinate variance ``sigma2``, so every
``X_t`` has covariance ``sigma2 * I_n``.
"""

from __future__ import annotations

import json
import struct
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy import signal, stats

INNOVATIONS = ("gaussian", "truncated-gaussian", "zero")


@dataclass(frozen=True)
class ProcessParams:
    """Parameters of an n-dimensional AR[1] process.

    ``innovation`` is ``"gaussian"``, ``"truncated-gaussian"`` (symmetric
    truncation at ``trunc_c`` standard deviations, rescaled to the exact
    variance) or ``"zero"``, a null process used for degenerate checks.
    """

    alpha: float
    sigma2: float = 1.0
    n: int = 1
    innovation: str = "gaussian"
    trunc_c: float = 2.0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.sigma2 > 0.0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n}")
        if self.innovation not in INNOVATIONS:
            raise ValueError(f"unknown innovation law {self.innovation!r}")
        if self.innovation == "truncated-gaussian" and not self.trunc_c > 0:
            raise ValueError("trunc_c must be positive")

    @property
    def innovation_variance(self) -> float:
        if self.innovation == "zero":
            return 0.0
        return self.sigma2 * (1.0 - self.alpha**2)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Trajectory:
    values: np.ndarray  # (T, n)
    params: ProcessParams
    seed: int | None = None

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class MomentEstimate:
    kappa_hat: float
    variance_hat: float
    trials: int
    high_variance: bool = False


def step(x, xi, alpha):
    """One AR[1] transition ``alpha * x + xi``."""
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if x.shape != xi.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {xi.shape}")
    return alpha * x + xi


def _draw(rng, params: ProcessParams, variance: float, size) -> np.ndarray:
    if params.innovation == "zero" or variance == 0.0:
        return np.zeros(size)
    if params.innovation == "gaussian":
        return rng.normal(0.0, np.sqrt(variance), size=size)
    c = params.trunc_c
    law = stats.truncnorm(-c, c)
    scale = np.sqrt(variance / law.var())
    return scale * law.rvs(size=size, random_state=rng)


def generate(params: ProcessParams, T: int, seed: int | None = None) -> Trajectory:
    """Draw ``X_0 .. X_{T-1}``; deterministic given ``seed``."""
    if T < 1:
        raise ValueError(f"horizon T must be >= 1, got {T}")
    rng = np.random.default_rng(seed)
    n = params.n
    drive = np.empty((T, n))
    drive[0] = _draw(rng, params, 0.0 if params.innovation == "zero" else params.sigma2, n)
    if T > 1:
        drive[1:] = _draw(rng, params, params.innovation_variance, (T - 1, n))
    # lfilter evaluates y[t] = x[t] + alpha * y[t-1], bit-identical to step().
    values = signal.lfilter([1.0], [1.0, -params.alpha], drive, axis=0)
    return Trajectory(values=np.ascontiguousarray(values), params=params, seed=seed)


def innovations(traj: Trajectory) -> np.ndarray:
    """Recover ``xi_1 .. xi_{T-1}`` from a trajectory."""
    v = traj.values
    return v[1:] - traj.params.alpha * v[:-1]


def subsample(traj: Trajectory, s: int) -> list[tuple[int, np.ndarray]]:
    """Return ``(k, X_{ks})`` for every sampling instant inside the horizon."""
    if s < 1:
        raise ValueError(f"sampling period must be >= 1, got {s}")
    return [(k, traj.values[k * s]) for k in range((traj.T - 1) // s + 1)]


def estimate_kappa(trajs) -> MomentEstimate:
    """Estimate ``sup_t (1/n) sqrt(E ||X_t||^4)`` across independent trials.

    Accepts a single :class:`Trajectory`, a sequence of them, or an array of
    shape ``(trials, T, n)``. A single trial is accepted but flagged.
    """
    if isinstance(trajs, Trajectory):
        values = trajs.values[None]
    elif isinstance(trajs, np.ndarray):
        values = trajs if trajs.ndim == 3 else trajs[None]
    else:
        values = np.stack([t.values for t in trajs])
    if values.size == 0:
        raise ValueError("empty trajectory")
    trials, _, n = values.shape
    sq = np.einsum("ktn,ktn->kt", values, values)
    kappa = float(np.max(np.sqrt(np.mean(sq**2, axis=0))) / n)
    variance = float(np.mean(sq) / n)
    single = trials == 1
    if single:
        warnings.warn("kappa estimated from a single trial; expect high variance", stacklevel=2)
    return MomentEstimate(kappa_hat=kappa, variance_hat=variance, trials=trials, high_variance=single)


def save_trajectory(traj: Trajectory, path) -> None:
    """Write ``<path>`` (little-endian float64, header n:u32, T:u32) plus ``<path>.json``."""
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<II", traj.n, traj.T))
        fh.write(np.ascontiguousarray(traj.values, dtype="<f8").tobytes())
    sidecar = {"params": traj.params.to_dict(), "seed": traj.seed}
    path.with_name(path.name + ".json").write_text(json.dumps(sidecar, sort_keys=True, indent=2) + "\n")


def load_trajectory(path) -> Trajectory:
    path = Path(path)
    raw = path.read_bytes()
    n, T = struct.unpack_from("<II", raw)
    values = np.frombuffer(raw, dtype="<f8", offset=8, count=n * T).reshape(T, n).astype(float)
    sidecar = json.loads(path.with_name(path.name + ".json").read_text())
    return Trajectory(values=values, params=ProcessParams(**sidecar["params"]), seed=sidecar["seed"])
