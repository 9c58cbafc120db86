"""Stealing versus sharing at a matched overall probe rate.

With overall probe budget ``r_overall``, stealing probes at
``r_steal = r_overall / (1 - lam)``. Sharing wins exactly when a sharing probe
(success probability ``1 - lam``) is more likely to transfer a job than a
stealing probe (success probability ``pi_{2+}(r_steal)``). Both strategies
share one fixed point for equal ``r``, so each comparison costs one QBD solve.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from enum import Enum

from . import qbd
from .errors import BracketError, InvalidParameterError, StealShareError
from .phasetype import PhaseTypeDist, require_unit_mean, to_descriptor

TIE_TOL = 1e-10
BISECT_TOL = 1e-8
BISECT_MAX_ITER = 200
UNBOUNDED = "unbounded"


class Winner(str, Enum):
    SHARING = "Sharing"
    STEALING = "Stealing"
    TIE = "Tie"


@dataclass(frozen=True)
class ComparisonVerdict:
    winner: Winner
    lam: float
    r_overall: float
    lhs: float
    rhs: float
    r_steal: float
    r_share: float | str | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["winner"] = self.winner.value
        d["lambda"] = d.pop("lam")
        return d

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


@dataclass
class BoundaryCurve:
    """Boundary load ``lambda*`` sampled over an increasing ``r_overall`` grid."""

    samples: list[tuple[float, float]]
    dist: dict
    tol: float
    iterations: list[int] = field(default_factory=list)
    residuals: list[float] = field(default_factory=list)
    failures: list[tuple[int, str]] = field(default_factory=list)

    def monotonicity_violations(self, slack: float = 1e-8) -> list[int]:
        """Indices ``i`` where ``lambda*`` drops from sample ``i-1`` to ``i``."""
        return [
            i
            for i in range(1, len(self.samples))
            if self.samples[i][1] < self.samples[i - 1][1] - slack
        ]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["r_overall", "lambda_star", "iterations", "residual"])
        for (r, ls), it, res in zip(self.samples, self.iterations, self.residuals):
            w.writerow([repr(float(r)), repr(float(ls)), it, repr(float(res))])
        return buf.getvalue()


def _check_lam(lam: float) -> None:
    if not 0.0 < lam < 1.0:
        raise InvalidParameterError(f"lambda must lie in (0, 1), got {lam}")


def pending_prob(dist: PhaseTypeDist, lam: float, r: float) -> float:
    """``pi_{2+}(r) 1``: probability that a server has a job waiting."""
    return qbd.tail_prob(qbd.solve(dist, lam, r), 2)


def steal_success_prob(dist: PhaseTypeDist, lam: float, r_overall: float) -> float:
    """Success probability of a stealing probe at overall budget ``r_overall``."""
    return pending_prob(dist, lam, r_overall / (1.0 - lam))


def decide(dist, lam, r_overall, tie_tol=TIE_TOL, with_r_share=False, tol=BISECT_TOL) -> ComparisonVerdict:
    """Which paradigm gives the lower mean response time at ``(lam, r_overall)``."""
    _check_lam(lam)
    if r_overall < 0:
        raise InvalidParameterError(f"r_overall must be >= 0, got {r_overall}")
    require_unit_mean(dist)
    r_steal = r_overall / (1.0 - lam)
    lhs = 1.0 - lam
    rhs = pending_prob(dist, lam, r_steal)
    if lhs > rhs + tie_tol:
        winner = Winner.SHARING
    elif lhs < rhs - tie_tol:
        winner = Winner.STEALING
    else:
        winner = Winner.TIE
    r_share = match_r_share(dist, lam, r_overall, tol) if with_r_share else None
    return ComparisonVerdict(winner, lam, r_overall, lhs, rhs, r_steal, r_share)


def _bisect(f, lo, hi, tol, max_iter=BISECT_MAX_ITER):
    """Root of an increasing ``f`` with ``f(lo) < 0 < f(hi)``; returns ``(x, iterations)``."""
    it = 0
    while hi - lo > tol and it < max_iter:
        mid = 0.5 * (lo + hi)
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
        it += 1
    return 0.5 * (lo + hi), it


def _lambda_star(dist, r_overall, tol):
    def h(lam):
        return steal_success_prob(dist, lam, r_overall) - (1.0 - lam)

    lo, hi = qbd.LAMBDA_MIN, qbd.LAMBDA_MAX
    h_lo, h_hi = h(lo), h(hi)
    if not (h_lo < 0 < h_hi):
        raise BracketError(
            f"no sign change of pi_2+ - (1 - lambda) on [{lo}, {hi}] (values {h_lo:.3g}, {h_hi:.3g})"
        )
    x, it = _bisect(h, lo, hi, tol)
    return x, it, abs(h(x))


def lambda_star(dist: PhaseTypeDist, r_overall: float, tol: float = BISECT_TOL) -> float:
    """Boundary load: sharing is best iff ``lam < lambda_star``."""
    if not r_overall > 0:
        raise InvalidParameterError(f"r_overall must be > 0, got {r_overall}")
    if not tol > 0:
        raise InvalidParameterError("tol must be positive")
    require_unit_mean(dist)
    return _lambda_star(dist, r_overall, tol)[0]


def r_star(dist: PhaseTypeDist, lam: float, tol: float = BISECT_TOL) -> float:
    """Boundary budget: sharing is best iff ``r_overall > r_star``."""
    _check_lam(lam)
    require_unit_mean(dist)
    target = 1.0 - lam
    if target > pending_prob(dist, lam, 0.0):
        return 0.0
    hi = lam**2 / (1.0 - lam)

    def g(r_overall):
        return target - steal_success_prob(dist, lam, r_overall)

    x, _ = _bisect(g, 0.0, hi, tol)
    return x


def match_r_share(dist: PhaseTypeDist, lam: float, r_overall: float, tol: float = BISECT_TOL):
    """Sharing probe rate whose overall probe rate equals ``r_overall``.

    Returns :data:`UNBOUNDED` at or above the saturation budget
    ``lam^2 / (1 - lam)``, where any ``r`` stays within budget.
    """
    _check_lam(lam)
    if r_overall < 0:
        raise InvalidParameterError(f"r_overall must be >= 0, got {r_overall}")
    require_unit_mean(dist)
    if r_overall == 0:
        return 0.0
    if r_overall >= lam**2 / (1.0 - lam):
        return UNBOUNDED

    def g(r):
        return r * pending_prob(dist, lam, r) - r_overall

    hi = max(1.0, r_overall)
    while g(hi) < 0:
        hi *= 2.0
        if hi > qbd.R_MAX:
            raise BracketError(f"sharing probe rate for r_overall={r_overall} exceeds {qbd.R_MAX:g}")
    x, _ = _bisect(g, 0.0, hi, tol)
    return x


def boundary_sweep(dist: PhaseTypeDist, r_grid, tol: float = BISECT_TOL) -> BoundaryCurve:
    """``lambda_star`` at each grid point; failures are collected, not raised."""
    r_grid = [float(x) for x in r_grid]
    if any(x <= 0 for x in r_grid) or any(b <= a for a, b in zip(r_grid, r_grid[1:])):
        raise InvalidParameterError("r_grid must be positive and strictly increasing")
    require_unit_mean(dist)
    curve = BoundaryCurve([], to_descriptor(dist), tol)
    for i, r in enumerate(r_grid):
        try:
            ls, it, res = _lambda_star(dist, r, tol)
        except StealShareError as exc:
            curve.failures.append((i, str(exc)))
            ls, it, res = math.nan, 0, math.nan
        curve.samples.append((r, ls))
        curve.iterations.append(it)
        curve.residuals.append(res)
    return curve
