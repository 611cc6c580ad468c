"""Closed-form accuracy, distortion and converse expressions for p-SU tracking.

Notation: ``alpha`` is the AR[1] coefficient, ``sigma2`` the per-coordinate
variance, ``R`` bits per dimension per slot, ``s`` the sampling period and
``p`` the update period. Accuracy is ``1 - Dbar / sigma2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .quantizer import QuantizerProfile


def eval_delta0(alpha: float, R: float) -> float:
    """Rate factor ``alpha^2 (1 - 2^-2R) / (1 - alpha^2 2^-2R)``; tends to ``alpha^2``."""
    if R < 0:
        raise ValueError("rate must be nonnegative")
    if math.isinf(R):
        return alpha**2
    r = 2.0 ** (-2.0 * R)
    return alpha**2 * (1.0 - r) / (1.0 - alpha**2 * r)


def eval_g(alpha: float, s: float) -> float:
    """Sampling factor ``(1 - alpha^2s) / (s (1 - alpha^2))``, with ``g(1) = 1``."""
    if s < 1:
        raise ValueError("sampling period must be >= 1")
    if s == 1:
        return 1.0
    return (1.0 - alpha ** (2 * s)) / (s * (1.0 - alpha**2))


def eval_gamma(profile: QuantizerProfile, alpha: float, sigma2: float, R: float, p: float) -> float:
    """Accuracy-speed curve of a quantizer family at update period ``p`` (real ``p > 0``)."""
    if not p > 0:
        raise ValueError("update period must be positive")
    theta = profile.theta(R * p)
    a2p = alpha ** (2 * p)
    return a2p / (1.0 - a2p * theta) * (1.0 - profile.eps**2 / sigma2 - theta)


def check_params(alpha: float, R: float, s: int, sigma2: float = 1.0, beta: float = 0.0,
                 kappa: float = 0.0) -> None:
    """Reject parameter tuples outside the model's domain."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if not R > 0:
        raise ValueError(f"rate must be positive, got {R}")
    if int(s) != s or s < 1:
        raise ValueError(f"sampling period must be a positive integer, got {s}")
    if not sigma2 > 0:
        raise ValueError(f"sigma2 must be positive, got {sigma2}")
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must lie in [0, 1], got {beta}")
    if kappa < 0:
        raise ValueError(f"kappa must be nonnegative, got {kappa}")


def divisors(s: int) -> list[int]:
    return [p for p in range(1, s + 1) if s % p == 0]


def select_p(profile: QuantizerProfile, alpha: float, sigma2: float, R: float, s: int) -> int:
    """Divisor of ``s`` maximising the accuracy-speed curve; ties go to the smaller ``p``."""
    if s < 1:
        raise ValueError("sampling period must be >= 1")
    best_p, best = 1, -math.inf
    for p in divisors(s):
        gamma = eval_gamma(profile, alpha, sigma2, R, p)
        if gamma > best:
            best_p, best = p, gamma
    return best_p


def eval_bt_limit(theta: float, eps: float, beta: float, alpha: float, sigma2: float,
                  kappa: float, s: int, p: int) -> float:
    """Asymptotic upper bound on the time-averaged distortion of p-SU."""
    if not 0.0 <= theta < 1.0:
        raise ValueError(f"theta must lie in [0, 1), got {theta}")
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must lie in [0, 1], got {beta}")
    g = eval_g(alpha, s)
    a2p = alpha ** (2 * p)
    main = sigma2 * (1.0 - g * a2p / (1.0 - a2p * theta) * (1.0 - eps**2 / sigma2 - theta))
    fail = kappa * beta * g / (1.0 - alpha ** (2 * s)) * (1.0 - alpha ** (2 * (s + p)) * (1.0 - theta) / (1.0 - a2p * theta))
    return main + fail


def lemma3_bound(i: int, j: int, d_ks: float, theta: float, eps: float, alpha: float,
                 sigma2: float, kappa: float = 0.0, beta: float = 0.0) -> float:
    """Per-slot distortion bound at ``t = ks + i`` after ``j`` completed updates of ``X_ks``.

    ``d_ks`` is the distortion at the sampling instant ``ks``.
    """
    a = alpha ** (2 * i)
    if theta == 1.0:
        bias = j * eps**2
    else:
        bias = (1.0 - theta**j) * eps**2 / (1.0 - theta)
    return a * theta**j * d_ks + sigma2 * (1.0 - a) + a * bias + a * kappa * beta


def converse_dstar(alpha: float, sigma2: float, R: float, s: int, K: int) -> tuple[np.ndarray, float]:
    """Iterate ``d_k = 2^-2Rs (alpha^2s d_{k-1} + sigma2 (1 - alpha^2s))`` from ``d_0 = 0``.

    Returns ``(d_0..d_K, limit)``.
    """
    if K < 0:
        raise ValueError("K must be >= 0")
    r = 2.0 ** (-2.0 * R * s)
    a = alpha ** (2 * s)
    d = np.zeros(K + 1)
    for k in range(1, K + 1):
        d[k] = r * (a * d[k - 1] + sigma2 * (1.0 - a))
    limit = sigma2 * (1.0 - a) * r / (1.0 - a * r)
    return d, limit


def converse_accuracy(alpha: float, R: float, s: int, sigma2: float = 1.0) -> tuple[float, float]:
    """Best achievable accuracy ``g(s) delta0(R)`` and the matching distortion floor."""
    acc = eval_g(alpha, s) * eval_delta0(alpha, R)
    return acc, sigma2 * (1.0 - acc)


def lemma4_average_bound(a: float, b: float) -> float:
    """Limit of running averages of any sequence with ``x_k <= a x_{k-1} + b``."""
    if abs(a) >= 1:
        raise ValueError("need |a| < 1")
    return b / (1.0 - a)


# ---------------------------------------------------------------------------
# analytic profiles


def ideal_profile() -> QuantizerProfile:
    return QuantizerProfile(theta=lambda R: 2.0 ** (-2.0 * R), eps=0.0, name="ideal")


def uniform_profile(n: int, M: float, R: float) -> QuantizerProfile:
    """Coordinate-wise uniform family; ``eps^2 = n M^2 2^-2R`` at the base rate ``R``.

    The additive term is held fixed across ``p``, as for any (theta, eps)
    family; it stays valid at rates ``Rp >= R``.
    """
    return QuantizerProfile(theta=lambda _: 0.0, eps=math.sqrt(n * M**2 * 2.0 ** (-2.0 * R)), M=M, name="uniform")


def gain_shape_profile(n: int, M: float, gain_bits: int) -> QuantizerProfile:
    """Gain-shape family with an ideal shape quantizer and ``gain_bits`` gain bits."""
    l = gain_bits
    theta = lambda R: min(1.0, 2.0 ** (-2.0 * (R - l / n) + 1.0))  # noqa: E731
    return QuantizerProfile(theta=theta, eps=math.sqrt(M**2 * 2.0 ** (-2 * l - 1)), M=M, name="gain-shape")


PROFILES = {"ideal", "uniform", "gain-shape"}


def make_profile(name: str, *, n: int = 1, M: float = 1.0, gain_bits: int = 0, R: float = 1.0) -> QuantizerProfile:
    if name == "ideal":
        return ideal_profile()
    if name == "uniform":
        return uniform_profile(n, M, R)
    if name == "gain-shape":
        return gain_shape_profile(n, M, gain_bits)
    raise ValueError(f"unknown profile {name!r}")


# ---------------------------------------------------------------------------
# report


@dataclass
class TheoryReport:
    alpha: float
    sigma2: float
    R: float
    s: int
    delta0: float
    g: float
    achievable_accuracy: float
    converse_accuracy: float
    converse_floor: float
    gamma_curve: dict[int, float] = field(default_factory=dict)
    p_star: int = 1
    b_infinity: float | None = None
    dstar_limit: float = 0.0

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["gamma_curve"] = {str(p): v for p, v in self.gamma_curve.items()}
        return d


def theory_report(alpha: float, R: float, s: int, sigma2: float = 1.0,
                  profile: QuantizerProfile | None = None, kappa: float = 0.0,
                  beta: float = 0.0) -> TheoryReport:
    """Evaluate every closed form for one parameter tuple.

    ``b_infinity`` is the asymptotic distortion bound at ``p_star``; it is left
    as ``None`` when ``theta(R p_star) == 1``.
    """
    check_params(alpha, R, s, sigma2, beta, kappa)
    profile = profile or ideal_profile()
    delta0 = eval_delta0(alpha, R)
    g = eval_g(alpha, s)
    conv_acc, floor = converse_accuracy(alpha, R, s, sigma2)
    curve = {p: eval_gamma(profile, alpha, sigma2, R, p) for p in divisors(s)}
    p_star = select_p(profile, alpha, sigma2, R, s)
    theta = profile.theta(R * p_star)
    b_inf = None
    if theta < 1.0:
        b_inf = eval_bt_limit(theta, profile.eps, beta, alpha, sigma2, kappa, s, p_star)
    _, dlim = converse_dstar(alpha, sigma2, R, s, 0)
    return TheoryReport(alpha=alpha, sigma2=sigma2, R=R, s=s, delta0=delta0, g=g,
                        achievable_accuracy=delta0 * g, converse_accuracy=conv_acc,
                        converse_floor=floor, gamma_curve=curve, p_star=p_star,
                        b_infinity=b_inf, dstar_limit=dlim)
