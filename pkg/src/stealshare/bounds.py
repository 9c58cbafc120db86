"""Closed-form and root-finding bounds on the stealing/sharing boundary.

Every value returned here is a load threshold in ``(0, 1]``. Sharing bounds
say "sharing is best below this load"; stealing bounds say "stealing is best
above it". Small-probe-rate limits are exact boundaries as ``r_overall -> 0``.

Two further claims are left as documented hypotheses without a solver:
stealing is conjectured best above the boundary obtained with deterministic
job sizes, and the exponential boundary is conjectured to be a sharing
(stealing) bound for every DHR (IHR) distribution.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from .errors import ApplicabilityError, InvalidParameterError
from .phasetype import (
    CONSTANT,
    DHR,
    IHR,
    PhaseTypeDist,
    exp_min_mean,
    laplace,
    require_unit_mean,
)

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0  # phi - 1
ROOT_LO = 1e-9
ROOT_HI = 1.0 - 1e-9
ROOT_TOL = 1e-10


class BoundKind(str, Enum):
    GENERAL_SHARING = "GeneralSharing"
    EXP_BOUNDARY = "ExpBoundary"
    DHR_STEALING = "DhrStealing"
    IHR_SHARING = "IhrSharing"
    GENERAL_IHR_SHARING = "GeneralIhrSharing"
    SMALL_R_NU = "SmallR_Nu"
    SMALL_R_ERLANG = "SmallR_Erlang"
    SMALL_R_HYPOEXP = "SmallR_Hypoexp"
    SMALL_R_HYPEREXP = "SmallR_Hyperexp"


@dataclass(frozen=True)
class BoundReport:
    kind: BoundKind
    value: float
    applicability: str
    r_overall: float | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = self.kind.value
        return d


def bisect_root(f: Callable[[float], float], lo=ROOT_LO, hi=ROOT_HI, tol=ROOT_TOL) -> float:
    """Root of ``f`` on ``[lo, hi]``, given opposite signs at the ends."""
    f_lo, f_hi = f(lo), f(hi)
    if f_lo == 0:
        return lo
    if f_hi == 0:
        return hi
    if (f_lo < 0) == (f_hi < 0):
        raise InvalidParameterError(f"no sign change on [{lo}, {hi}]")
    neg_lo = f_lo < 0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if (f(mid) < 0) == neg_lo:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def general_sharing_bound(r_overall: float) -> float:
    """Sharing is best below this load for every mean-one job size distribution."""
    if r_overall < 0:
        raise InvalidParameterError("r_overall must be >= 0")
    return max(1.0, math.sqrt(r_overall * (r_overall + 4.0)) - r_overall) / 2.0


def exp_boundary(r_overall: float) -> float:
    """Exact boundary for exponential job sizes."""
    if r_overall < 0:
        raise InvalidParameterError("r_overall must be >= 0")
    r1 = r_overall + 1.0
    return (math.sqrt(r1 * (r_overall + 5.0)) - r1) / 2.0


def L(x: float) -> float:
    """Positive root of ``x lam^2 + lam - 1 = 0``; ``L(0) = 1``."""
    if x < 0:
        raise InvalidParameterError("L is defined for x >= 0")
    if x == 0:
        return 1.0
    # rationalized form of (sqrt(1 + 4x) - 1) / (2x), stable for small x
    return 2.0 / (1.0 + math.sqrt(1.0 + 4.0 * x))


def _hazard_bound(dist: PhaseTypeDist, r_overall: float, allowed: str) -> float:
    if dist.hazard not in (allowed, CONSTANT):
        raise ApplicabilityError(
            f"bound needs a {allowed.upper()} distribution, got hazard class {dist.hazard!r}"
        )
    if r_overall < 0:
        raise InvalidParameterError("r_overall must be >= 0")
    require_unit_mean(dist)
    return L(exp_min_mean(dist, r_overall))


def dhr_stealing_bound(dist: PhaseTypeDist, r_overall: float) -> float:
    """For DHR job sizes stealing is best above this load."""
    return _hazard_bound(dist, r_overall, DHR)


def ihr_sharing_bound(dist: PhaseTypeDist, r_overall: float) -> float:
    """For IHR job sizes sharing is best below this load."""
    return _hazard_bound(dist, r_overall, IHR)


def general_ihr_sharing_bound(r_overall: float) -> float:
    """Distribution-free version of :func:`ihr_sharing_bound`."""
    if r_overall < 0:
        raise InvalidParameterError("r_overall must be >= 0")
    if r_overall == 0:
        return GOLDEN
    return L(-math.expm1(-r_overall) / r_overall)


def small_r_nu() -> float:
    """Limit boundary for deterministic-like jobs: root of ``lam/(1-lam) = e^lam``."""
    return bisect_root(lambda x: math.log(x / (1.0 - x)) - x)


def small_r_erlang(k: int) -> float:
    """Small-``r_overall`` boundary for mean-one Erlang-``k`` job sizes."""
    if int(k) != k or k < 1:
        raise InvalidParameterError(f"k must be a positive integer, got {k}")
    return bisect_root(lambda x: math.log(x / (1.0 - x)) - k * math.log1p(x / k))


def small_r_hypoexp(rates: Sequence[float]) -> float:
    """Small-``r_overall`` boundary for mean-one hypoexponential job sizes."""
    rates = np.asarray(rates, dtype=float)
    if rates.size == 0 or np.any(rates <= 0):
        raise InvalidParameterError("rates must be nonempty and positive")
    if abs(np.sum(1.0 / rates) - 1.0) > 1e-8:
        raise ApplicabilityError(f"hypoexponential mean must be 1, got {np.sum(1.0 / rates)}")
    return bisect_root(lambda x: math.log(x / (1.0 - x)) - float(np.sum(np.log1p(x / rates))))


def small_r_hyperexp(p: Sequence[float], mu: Sequence[float]) -> float:
    """Small-``r_overall`` boundary for mean-one hyperexponential job sizes."""
    p = np.asarray(p, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if p.shape != mu.shape or np.any(mu <= 0) or np.any(p < 0) or abs(p.sum() - 1) > 1e-12:
        raise InvalidParameterError("need probabilities p and positive rates mu of equal length")
    if abs(np.sum(p / mu) - 1.0) > 1e-8:
        raise ApplicabilityError(f"hyperexponential mean must be 1, got {np.sum(p / mu)}")
    return bisect_root(lambda x: 1.0 / x - 1.0 - float(np.sum(p * mu / (x + mu))))


def small_r_boundary(dist: PhaseTypeDist) -> float:
    """Small-``r_overall`` boundary for any mean-one PH: ``lam/(1-lam) = 1/g(lam)``."""
    require_unit_mean(dist)
    return bisect_root(lambda x: math.log(x / (1.0 - x)) + math.log(laplace(dist, x)))


def mg1_pi_le1(dist: PhaseTypeDist, lam: float) -> float:
    """Probability of at most one job in the M/G/1 queue, ``(1-lam)/g(lam)``."""
    if not 0 < lam < 1:
        raise InvalidParameterError("lambda must lie in (0, 1)")
    require_unit_mean(dist)
    return (1.0 - lam) / laplace(dist, lam)


def mg1_pi_le1_bound(lam: float) -> float:
    """Upper bound ``(1-lam) e^lam``, attained by deterministic service."""
    return (1.0 - lam) * math.exp(lam)


def _family(dist: PhaseTypeDist):
    return dist.descriptor.get("kind"), dist.descriptor


def report(dist: PhaseTypeDist | None, r_overall: float) -> list[BoundReport]:
    """All bounds that apply to ``dist`` (or only distribution-free ones)."""
    out = [
        BoundReport(BoundKind.GENERAL_SHARING, general_sharing_bound(r_overall), "any PH, mean 1", r_overall),
        BoundReport(BoundKind.EXP_BOUNDARY, exp_boundary(r_overall), "exponential, exact", r_overall),
        BoundReport(BoundKind.SMALL_R_NU, small_r_nu(), "any PH as r_overall -> 0 (stealing above)"),
    ]
    if r_overall > 0:
        out.append(
            BoundReport(
                BoundKind.GENERAL_IHR_SHARING, general_ihr_sharing_bound(r_overall), "any IHR, mean 1", r_overall
            )
        )
    if dist is None:
        return out
    if dist.hazard in (DHR, CONSTANT):
        out.append(BoundReport(BoundKind.DHR_STEALING, dhr_stealing_bound(dist, r_overall), "DHR", r_overall))
    if dist.hazard in (IHR, CONSTANT):
        out.append(BoundReport(BoundKind.IHR_SHARING, ihr_sharing_bound(dist, r_overall), "IHR", r_overall))
    kind, desc = _family(dist)
    if kind == "erlang":
        out.append(BoundReport(BoundKind.SMALL_R_ERLANG, small_r_erlang(desc["k"]), f"Erlang-{desc['k']}, r -> 0"))
    elif kind == "hypoexp":
        out.append(BoundReport(BoundKind.SMALL_R_HYPOEXP, small_r_hypoexp(desc["rates"]), "hypoexponential, r -> 0"))
    elif kind == "hyperexp" or (dist.hazard == DHR and np.all(dist.S == np.diag(np.diag(dist.S)))):
        out.append(
            BoundReport(BoundKind.SMALL_R_HYPEREXP, small_r_hyperexp(dist.alpha, dist.mu), "hyperexponential, r -> 0")
        )
    return out
