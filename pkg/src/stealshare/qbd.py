"""M/PH/1 queue with negative customers: the mean-field fixed point.

Level ``l`` of the QBD is the queue length; the phase is the service phase of
the job in service. Arrivals occur at rate ``lam`` when busy and ``lambda0``
when idle; negative customers remove a waiting job at rate ``(1-lam) r``
whenever the queue holds two or more jobs. Blocks for levels >= 2::

    A1  = lam I                       (up)
    A0  = S - (lam + (1-lam) r) I      (local)
    Am1 = mu alpha + (1-lam) r I       (down)

``G`` is obtained by logarithmic reduction, ``R = A1 (-(A0 + A1 G))^-1``.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

from .errors import ConvergenceError, InvalidParameterError, StabilityError
from .phasetype import PhaseTypeDist, busy_phase_vector, require_unit_mean, to_descriptor

LAMBDA_MIN = 1e-6
LAMBDA_MAX = 1.0 - 1e-6
R_MAX = 1e9

G_TOL = 1e-12
RESIDUAL_TOL = 1e-10
MAX_ITER = 200
FUNCTIONAL_MAX_ITER = 100_000


@dataclass(frozen=True)
class QbdModel:
    dist: PhaseTypeDist
    lam: float
    r: float

    def __post_init__(self):
        lam, r = float(self.lam), float(self.r)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "r", r)
        if not lam < 1.0:
            raise StabilityError(f"arrival rate must be below 1 for stability, got {lam}")
        if not LAMBDA_MIN <= lam <= LAMBDA_MAX:
            raise InvalidParameterError(f"arrival rate {lam} outside [{LAMBDA_MIN}, {LAMBDA_MAX}]")
        if not 0.0 <= r <= R_MAX:
            raise InvalidParameterError(f"probe rate {r} outside [0, {R_MAX:g}]")

    @property
    def neg_rate(self) -> float:
        """Rate of negative customers, ``(1 - lam) r``."""
        return (1.0 - self.lam) * self.r

    @property
    def A1(self) -> np.ndarray:
        return self.lam * np.eye(self.dist.n)

    @property
    def A0(self) -> np.ndarray:
        return self.dist.S - (self.lam + self.neg_rate) * np.eye(self.dist.n)

    @property
    def Am1(self) -> np.ndarray:
        return np.outer(self.dist.mu, self.dist.alpha) + self.neg_rate * np.eye(self.dist.n)


@dataclass(frozen=True)
class QbdSolution:
    """Stationary regime of the negative-customer M/PH/1 queue.

    ``pi0`` is the idle probability (always ``1 - lam``), ``pi1`` the level-1
    phase vector and ``pi_l = pi1 R^(l-1)`` for ``l >= 2``.
    """

    model: QbdModel
    G: np.ndarray
    R: np.ndarray
    R1: np.ndarray
    lambda0: float
    pi0: float
    pi1: np.ndarray
    iterations: int
    method: str
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("G", "R", "R1", "pi1"):
            getattr(self, name).setflags(write=False)

    @property
    def lam(self) -> float:
        return self.model.lam

    @property
    def r(self) -> float:
        return self.model.r

    @property
    def _inv_IR(self) -> np.ndarray:
        return la.inv(np.eye(self.model.dist.n) - self.R)

    def level(self, ell: int) -> np.ndarray:
        """Phase vector ``pi_ell`` (a scalar array for ``ell = 0``)."""
        if ell < 0:
            raise InvalidParameterError("level must be >= 0")
        if ell == 0:
            return np.array([self.pi0])
        return self.pi1 @ np.linalg.matrix_power(self.R, ell - 1)

    def levels(self, upto: int) -> np.ndarray:
        """Level probabilities ``pi_l 1`` for ``l = 0..upto``."""
        out = np.empty(upto + 1)
        out[0] = self.pi0
        v = self.pi1.copy()
        for ell in range(1, upto + 1):
            out[ell] = v.sum()
            v = v @ self.R
        return out

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "r": self.r,
            "dist": to_descriptor(self.model.dist),
            "lambda0": self.lambda0,
            "pi0": self.pi0,
            "G": self.G.tolist(),
            "R": self.R.tolist(),
            "R1": self.R1.tolist(),
            "pi1": self.pi1.tolist(),
            "mean_response": mean_response(self),
            "diagnostics": dict(self.diagnostics, iterations=self.iterations, method=self.method),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    def levels_csv(self, upto: int) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["level", "prob"])
        for ell, p in enumerate(self.levels(upto)):
            w.writerow([ell, repr(float(p))])
        return buf.getvalue()


def _g_residual(Am1, A0, A1, G) -> float:
    return float(np.max(np.abs(Am1 + A0 @ G + A1 @ G @ G)))


def log_reduction(Am1, A0, A1, tol=G_TOL, max_iter=MAX_ITER):
    """Minimal nonnegative solution of ``Am1 + A0 G + A1 G^2 = 0``.

    Latouche-Ramaswami logarithmic reduction on the embedded jump chain.
    Returns ``(G, iterations)``; raises :class:`ConvergenceError` if the
    row sums of ``G`` have not reached 1 within ``max_iter`` steps.
    """
    n = A0.shape[0]
    eye = np.eye(n)
    lu = la.lu_factor(-A0)
    H = la.lu_solve(lu, Am1)  # down
    L = la.lu_solve(lu, A1)  # up
    G = H.copy()
    T = L.copy()
    ones = np.ones(n)
    for it in range(1, max_iter + 1):
        with np.errstate(all="ignore"):
            U = H @ L + L @ H
            M = la.lu_factor(eye - U, check_finite=False)
            H = la.lu_solve(M, H @ H, check_finite=False)
            L = la.lu_solve(M, L @ L, check_finite=False)
            G_new = G + T @ H
            T = T @ L
        if not np.all(np.isfinite(G_new)):
            # I - U turns numerically singular close to null recurrence
            raise ConvergenceError("logarithmic reduction lost precision", iterations=it)
        step = np.max(np.abs(G_new - G))
        G = G_new
        if np.max(np.abs(ones - G @ ones)) < tol and step < tol:
            return G, it
    raise ConvergenceError(
        "logarithmic reduction did not converge",
        residual=float(np.max(np.abs(ones - G @ ones))),
        iterations=max_iter,
    )


def shifted_cyclic_reduction(Am1, A0, A1, tol=G_TOL, max_iter=MAX_ITER):
    """Cyclic reduction after shifting the unit eigenvalue of ``G`` to zero.

    With ``Q = 1 u`` and ``u 1 = 1`` the shifted blocks ``Am1 (I - Q)``,
    ``A0 + A1 Q``, ``A1`` have minimal solution ``G - Q``, which keeps the
    iteration quadratically convergent near null recurrence where
    logarithmic reduction breaks down.
    """
    n = A0.shape[0]
    Q = np.full((n, n), 1.0 / n)
    down = Am1 @ (np.eye(n) - Q)
    local = A0 + A1 @ Q
    up = A1.copy()
    head = local.copy()
    G = None
    for it in range(1, max_iter + 1):
        lu = la.lu_factor(local)
        k_down = la.lu_solve(lu, down)
        k_up = la.lu_solve(lu, up)
        head = head - up @ k_down
        local = local - down @ k_up - up @ k_down
        down, up = -down @ k_down, -up @ k_up
        G_new = Q - la.solve(head, Am1 @ (np.eye(n) - Q))
        if G is not None and np.max(np.abs(G_new - G)) < tol:
            return G_new, it
        G = G_new
    raise ConvergenceError(
        "shifted cyclic reduction did not converge",
        residual=_g_residual(Am1, A0, A1, G),
        iterations=max_iter,
    )


def functional_iteration(Am1, A0, A1, tol=G_TOL, max_iter=FUNCTIONAL_MAX_ITER, G0=None):
    """Fallback: ``G <- (-A0)^-1 (Am1 + A1 G^2)`` starting from ``G0`` or zero."""
    n = A0.shape[0]
    lu = la.lu_factor(-A0)
    G = np.zeros((n, n)) if G0 is None else G0.copy()
    for it in range(1, max_iter + 1):
        G_new = la.lu_solve(lu, Am1 + A1 @ G @ G)
        step = np.max(np.abs(G_new - G))
        G = G_new
        if step < tol:
            return G, it
    raise ConvergenceError(
        "functional iteration did not converge",
        residual=_g_residual(Am1, A0, A1, G),
        iterations=max_iter,
    )


_G_SOLVERS = (
    ("logarithmic-reduction", log_reduction),
    ("shifted-cyclic-reduction", shifted_cyclic_reduction),
    ("functional-iteration", functional_iteration),
)


def _level_vector(model: QbdModel, G: np.ndarray) -> np.ndarray:
    """``alpha (lam (I - G) - S)^-1``, the unnormalized shape of ``pi1``."""
    d = model.dist
    K = model.lam * (np.eye(d.n) - G) - d.S
    return la.solve(K.T, d.alpha)


def solve(model_or_dist, lam=None, r=None, *, tol=G_TOL) -> QbdSolution:
    """Solve the fixed point for ``QbdModel`` or ``(dist, lam, r)``."""
    model = model_or_dist if isinstance(model_or_dist, QbdModel) else QbdModel(model_or_dist, lam, r)
    require_unit_mean(model.dist)
    n = model.dist.n
    eye = np.eye(n)
    A1, A0, Am1 = model.A1, model.A0, model.Am1

    G, iters, method = None, 0, None
    for name, algo in _G_SOLVERS:
        try:
            G, it = algo(Am1, A0, A1, tol=tol)
        except (ConvergenceError, la.LinAlgError):
            continue
        iters += it
        method = name
        if _g_residual(Am1, A0, A1, G) <= RESIDUAL_TOL:
            break
    if G is None:
        raise ConvergenceError("no G solver converged", iterations=iters)
    g_res = _g_residual(Am1, A0, A1, G)
    if g_res > RESIDUAL_TOL:
        raise ConvergenceError("G residual above tolerance", residual=g_res, iterations=iters)

    R = A1 @ la.inv(-(A0 + A1 @ G))
    r_res = float(np.max(np.abs(A1 + R @ A0 + R @ R @ Am1)))

    lam = model.lam
    w = _level_vector(model, G)
    inv_IR = la.inv(eye - R)
    denom = float(w @ inv_IR @ np.ones(n))
    lambda0 = lam / ((1.0 - lam) * denom)
    R1 = lambda0 * w
    pi0 = 1.0 - lam
    pi1 = pi0 * R1

    diagnostics = {
        "G_residual": g_res,
        "R_residual": r_res,
        "AG_RA_residual": float(np.max(np.abs(A1 @ G - R @ Am1))),
        "spectral_radius_R": float(np.max(np.abs(np.linalg.eigvals(R)))),
    }
    return QbdSolution(model, G, R, R1, lambda0, pi0, pi1, iters, method, diagnostics)


def tail_prob(sol: QbdSolution, k: int) -> float:
    """Probability ``pi_{k+} 1`` of holding at least ``k`` jobs (``k >= 1``)."""
    if k < 1:
        raise InvalidParameterError(f"k must be >= 1, got {k}")
    v = sol.pi1 @ np.linalg.matrix_power(sol.R, k - 1)
    return float(v @ sol._inv_IR @ np.ones(sol.model.dist.n))


def tail_vector(sol: QbdSolution, k: int) -> np.ndarray:
    """Phase vector ``pi_{k+}`` (not summed over phases)."""
    return sol.pi1 @ np.linalg.matrix_power(sol.R, k - 1) @ sol._inv_IR


def mean_queue_length(sol: QbdSolution) -> float:
    inv = sol._inv_IR
    return float(sol.pi1 @ inv @ inv @ np.ones(sol.model.dist.n))


def mean_response(sol: QbdSolution) -> float:
    """Mean response time through Little's law, ``E[Q] / lam``."""
    return mean_queue_length(sol) / sol.lam


def lambda0_forms(sol: QbdSolution) -> dict[str, float]:
    """The three equivalent expressions for the idle arrival rate."""
    m = sol.model
    n = m.dist.n
    w = _level_vector(m, sol.G)
    ones = np.ones(n)
    via_norm = m.lam / ((1.0 - m.lam) * float(w @ sol._inv_IR @ ones))
    via_flow = m.lam * (1.0 + m.r) / (1.0 + m.neg_rate * float(w @ ones))
    via_tail = m.lam + m.r * tail_prob(sol, 2)
    return {"normalization": via_norm, "closed": via_flow, "level_crossing": via_tail}


def lambda0_consistency(sol: QbdSolution) -> float:
    """Largest pairwise disagreement between the three ``lambda0`` forms."""
    v = list(lambda0_forms(sol).values())
    return max(v) - min(v)


def balance_residual(sol: QbdSolution, L: int = 50) -> float:
    """Max-abs entry of ``zeta Q(r)`` over levels ``0..L``.

    Certifies that the computed vector is a stationary point of the
    mean-field drift. Level ``L`` uses ``pi_{L+1}``.
    """
    if L < 3:
        raise InvalidParameterError("truncation level must be >= 3")
    m = sol.model
    d = m.dist
    A1, A0, Am1 = m.A1, m.A0, m.Am1
    pis = [sol.level(ell) for ell in range(L + 2)]
    res = [abs(-sol.pi0 * sol.lambda0 + float(pis[1] @ d.mu))]
    lvl1 = sol.pi0 * sol.lambda0 * d.alpha + pis[1] @ (d.S - m.lam * np.eye(d.n)) + pis[2] @ Am1
    res.append(float(np.max(np.abs(lvl1))))
    for ell in range(2, L + 1):
        v = pis[ell - 1] @ A1 + pis[ell] @ A0 + pis[ell + 1] @ Am1
        res.append(float(np.max(np.abs(v))))
    return max(res)


def invariants(sol: QbdSolution) -> dict[str, float]:
    """Residuals of the structural identities of a solution (all should be ~0)."""
    d = sol.model.dist
    ones = np.ones(d.n)
    busy = sol.pi1 @ sol._inv_IR
    beta = busy_phase_vector(d)
    return {
        "G_stochastic": float(np.max(np.abs(sol.G @ ones - 1.0))),
        "R_equation": sol.diagnostics["R_residual"],
        "AG_RA": sol.diagnostics["AG_RA_residual"],
        "normalization": abs(sol.pi0 + float(busy @ ones) - 1.0),
        "busy_phase": float(np.max(np.abs(busy - sol.lam * beta))),
        "throughput": abs(float(busy @ d.mu) - sol.lam),
    }
