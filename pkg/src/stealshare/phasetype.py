"""Phase-type job size distributions.

A phase-type distribution is the absorption time of a finite Markov chain
with initial probability vector ``alpha`` and subgenerator ``S``. The exit
rate vector is ``mu = -S @ 1``. Constructors for the families used by the
mean-field model (Erlang, hypoexponential, two-phase hyperexponential) tag
the result with its hazard-rate class.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
import scipy.linalg as la
from scipy.sparse.csgraph import connected_components

from .errors import DecompositionError, InvalidParameterError, NumericError, UnsupportedShapeError

#: hazard-rate classes; ``constant`` (exponential) satisfies both DHR and IHR bounds
DHR = "dhr"
IHR = "ihr"
CONSTANT = "constant"
UNKNOWN = "unknown"

_TOL = 1e-12


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PhaseTypeDist:
    """Job size distribution given by the pair ``(alpha, S)``.

    Use the family constructors (:func:`erlang`, :func:`hypoexp`,
    :func:`fit_hyperexp`, :func:`exponential`) or :func:`ph` for an
    arbitrary representation. Arrays are read-only after construction.
    """

    alpha: np.ndarray
    S: np.ndarray
    hazard: str = UNKNOWN
    descriptor: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        alpha = _frozen(self.alpha).reshape(-1)
        S = _frozen(np.atleast_2d(self.S))
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "S", S)
        n = alpha.size
        if n == 0 or S.shape != (n, n):
            raise InvalidParameterError(f"alpha has length {n} but S has shape {S.shape}")
        if not np.all(np.isfinite(alpha)) or not np.all(np.isfinite(S)):
            raise InvalidParameterError("alpha and S must be finite")
        if np.any(alpha < 0) or abs(alpha.sum() - 1.0) > _TOL:
            raise InvalidParameterError(f"alpha must be a probability vector, got {alpha}")
        off = S - np.diag(np.diag(S))
        if np.any(np.diag(S) >= 0) or np.any(off < 0):
            raise InvalidParameterError("S needs a negative diagonal and nonnegative off-diagonal entries")
        rows = S.sum(axis=1)
        if np.any(rows > _TOL) or not np.any(rows < 0):
            raise InvalidParameterError("row sums of S must be <= 0 with at least one strictly negative")
        try:
            m = float(alpha @ la.solve(-S, np.ones(n)))
        except la.LinAlgError as exc:
            raise NumericError(f"S is singular: {exc}") from exc
        if not (np.isfinite(m) and m > 0):
            raise NumericError(f"mean {m} is not finite and positive")
        if not self.descriptor:
            object.__setattr__(self, "descriptor", {"kind": "ph", "alpha": alpha.tolist(), "S": S.tolist()})

    @property
    def n(self) -> int:
        return self.alpha.size

    @property
    def mu(self) -> np.ndarray:
        """Exit rate column, ``-S @ 1``."""
        return -self.S.sum(axis=1)

    @property
    def mean(self) -> float:
        return moments(self)[0]

    def moment(self, k: int) -> float:
        """Raw moment ``E[X^k] = k! alpha (-S)^-k 1``."""
        v = np.ones(self.n)
        for _ in range(k):
            v = la.solve(-self.S, v)
        return math.factorial(k) * float(self.alpha @ v)

    def to_json(self) -> str:
        return json.dumps(self.descriptor, sort_keys=True)

    def __eq__(self, other):
        if not isinstance(other, PhaseTypeDist):
            return NotImplemented
        return (
            self.hazard == other.hazard
            and np.array_equal(self.alpha, other.alpha)
            and np.array_equal(self.S, other.S)
        )

    def __hash__(self):
        return hash((self.alpha.tobytes(), self.S.tobytes(), self.hazard))


def ph(alpha: Sequence[float], S, hazard: str = UNKNOWN) -> PhaseTypeDist:
    """General phase-type distribution; hazard class is taken as declared."""
    return PhaseTypeDist(alpha, S, hazard)


def exponential(rate: float = 1.0) -> PhaseTypeDist:
    return hypoexp([rate])


def hypoexp(rates: Sequence[float]) -> PhaseTypeDist:
    """Sum of independent exponentials visited in the given order."""
    rates = [float(x) for x in rates]
    if not rates:
        raise InvalidParameterError("hypoexp needs at least one rate")
    if any(not (x > 0 and math.isfinite(x)) for x in rates):
        raise InvalidParameterError(f"rates must be positive, got {rates}")
    n = len(rates)
    S = np.diag([-x for x in rates])
    for i in range(n - 1):
        S[i, i + 1] = rates[i]
    alpha = np.zeros(n)
    alpha[0] = 1.0
    hazard = CONSTANT if n == 1 else IHR
    return PhaseTypeDist(alpha, S, hazard, {"kind": "hypoexp", "rates": rates})


def erlang(k: int) -> PhaseTypeDist:
    """Mean-one Erlang distribution with ``k`` phases of rate ``k``."""
    if isinstance(k, bool) or int(k) != k or k < 1:
        raise InvalidParameterError(f"Erlang order must be a positive integer, got {k}")
    k = int(k)
    d = hypoexp([float(k)] * k)
    return PhaseTypeDist(d.alpha, d.S, d.hazard, {"kind": "erlang", "k": k})


def hyperexp(probs: Sequence[float], rates: Sequence[float]) -> PhaseTypeDist:
    """Mixture of exponentials, diagonal ``S``."""
    probs = np.asarray(probs, dtype=float)
    rates = np.asarray(rates, dtype=float)
    if probs.shape != rates.shape or probs.size == 0:
        raise InvalidParameterError("probs and rates must be nonempty and of equal length")
    if np.any(rates <= 0):
        raise InvalidParameterError(f"rates must be positive, got {rates}")
    hazard = CONSTANT if np.all(rates == rates[0]) else DHR
    return PhaseTypeDist(probs, np.diag(-rates), hazard)


@dataclass(frozen=True)
class HyperExpSpec:
    """Target shape of a mean-one two-phase hyperexponential.

    ``f`` is the fraction of the workload carried by type-1 jobs.
    """

    scv: float
    f: float = 0.5

    def __post_init__(self):
        if not math.isfinite(self.scv):
            raise InvalidParameterError(f"scv must be finite, got {self.scv}")
        if self.scv < 1:
            raise UnsupportedShapeError(f"a hyperexponential cannot have SCV < 1 (got {self.scv})")
        if not 0 < self.f < 1:
            raise InvalidParameterError(f"f must lie in (0, 1), got {self.f}")


def fit_hyperexp(spec: HyperExpSpec | float, f: float | None = None) -> PhaseTypeDist:
    """Two-phase hyperexponential with mean 1, the given SCV and workload split.

    Accepts a :class:`HyperExpSpec` or ``(scv, f)`` directly.

    >>> d = fit_hyperexp(5, 0.5)
    >>> round(d.alpha[0], 4), round(1 / d.mu[0], 4), round(1 / d.mu[1], 4)
    (0.9082, 0.5505, 5.4495)
    """
    if not isinstance(spec, HyperExpSpec):
        spec = HyperExpSpec(float(spec), 0.5 if f is None else float(f))
    scv, f = spec.scv, spec.f
    fb = 1.0 - f
    root = math.sqrt((scv - 1.0) * (scv - 1.0 + 8.0 * f * fb))
    mu1 = (scv + 4.0 * f - 1.0 + root) / (2.0 * f * (scv + 1.0))
    mu2 = (scv + 4.0 * fb - 1.0 - root) / (2.0 * fb * (scv + 1.0))
    if not (mu1 > 0 and mu2 > 0):
        raise UnsupportedShapeError(f"no valid rates for scv={scv}, f={f}")
    p1 = mu1 * f
    d = hyperexp([p1, 1.0 - p1], [mu1, mu2])
    return PhaseTypeDist(d.alpha, d.S, d.hazard, {"kind": "hyperexp", "scv": scv, "f": f})


def moments(d: PhaseTypeDist) -> tuple[float, float]:
    """Return ``(mean, scv)``."""
    try:
        m1 = d.moment(1)
        m2 = d.moment(2)
    except la.LinAlgError as exc:
        raise NumericError(f"S is singular: {exc}") from exc
    return m1, m2 / m1**2 - 1.0


def laplace(d: PhaseTypeDist, s: float) -> float:
    """Laplace-Stieltjes transform ``alpha (sI - S)^-1 mu``."""
    if s < 0:
        raise InvalidParameterError(f"s must be >= 0, got {s}")
    return float(d.alpha @ la.solve(s * np.eye(d.n) - d.S, d.mu))


def busy_phase_vector(d: PhaseTypeDist) -> np.ndarray:
    """Stationary phase vector ``beta`` of a continuously busy server.

    Solves ``beta (S + mu alpha) = 0`` with the normalization replacing the
    last balance equation.
    """
    Q = d.S + np.outer(d.mu, d.alpha)
    adj = (np.abs(Q) > 0) & ~np.eye(d.n, dtype=bool)
    ncomp, labels = connected_components(adj, directed=True, connection="strong")
    if ncomp > 1:
        # count closed classes: no transitions leaving the class
        closed = sum(1 for c in range(ncomp) if not np.any(adj[labels == c][:, labels != c]))
        if closed > 1:
            raise DecompositionError(f"S + mu alpha has {closed} closed classes")
    A = Q.T.copy()
    A[-1, :] = 1.0
    b = np.zeros(d.n)
    b[-1] = 1.0
    try:
        beta = la.solve(A, b)
    except la.LinAlgError as exc:
        raise DecompositionError(f"cannot solve for the busy phase vector: {exc}") from exc
    return beta


def exp_min_mean(d: PhaseTypeDist, r: float) -> float:
    """Mean of ``min(X, E)`` with ``E ~ Exp(r)`` independent of the job size ``X``."""
    if r < 0:
        raise InvalidParameterError(f"r must be >= 0, got {r}")
    return float(d.alpha @ la.solve(r * np.eye(d.n) - d.S, np.ones(d.n)))


def require_unit_mean(d: PhaseTypeDist, tol: float = 1e-8) -> None:
    m = d.mean
    if abs(m - 1.0) > tol:
        raise InvalidParameterError(f"job size distribution must have mean 1, got {m:.12g}")


# descriptors -----------------------------------------------------------------


def from_descriptor(desc: dict[str, Any]) -> PhaseTypeDist:
    """Build a distribution from its JSON descriptor."""
    if not isinstance(desc, dict) or "kind" not in desc:
        raise InvalidParameterError(f"descriptor needs a 'kind' field: {desc!r}")
    kind = desc["kind"]
    try:
        if kind == "hyperexp":
            return fit_hyperexp(HyperExpSpec(float(desc["scv"]), float(desc.get("f", 0.5))))
        if kind == "erlang":
            return erlang(desc["k"])
        if kind == "hypoexp":
            return hypoexp(desc["rates"])
        if kind == "ph":
            return ph(desc["alpha"], desc["S"], desc.get("hazard", UNKNOWN))
    except KeyError as exc:
        raise InvalidParameterError(f"descriptor of kind {kind!r} is missing {exc}") from exc
    raise InvalidParameterError(f"unknown distribution kind {kind!r}")


def to_descriptor(d: PhaseTypeDist) -> dict[str, Any]:
    desc = dict(d.descriptor)
    if desc.get("kind") == "ph" and d.hazard != UNKNOWN:
        desc["hazard"] = d.hazard
    return desc


def parse_dist(text: str) -> PhaseTypeDist:
    """Parse a distribution from CLI shorthand, inline JSON or a JSON file.

    Shorthands: ``exp``, ``erlang:K``, ``hypoexp:R1,R2,...``,
    ``hyperexp:SCV[:F]``. A leading ``@`` or an existing path reads a file.
    """
    text = text.strip()
    if text.startswith("{"):
        return from_descriptor(json.loads(text))
    path = text[1:] if text.startswith("@") else text
    if text.startswith("@") or path.endswith(".json"):
        with open(path) as fh:
            return from_descriptor(json.load(fh))
    kind, _, rest = text.partition(":")
    kind = kind.lower()
    try:
        if kind in ("exp", "exponential"):
            return erlang(1) if not rest else hypoexp([float(rest)])
        if kind == "erlang":
            return erlang(int(rest))
        if kind == "hypoexp":
            return hypoexp([float(x) for x in rest.split(",")])
        if kind in ("hyperexp", "hexp"):
            parts = rest.split(":")
            f = float(parts[1]) if len(parts) > 1 else 0.5
            return fit_hyperexp(HyperExpSpec(float(parts[0]), f))
    except ValueError as exc:
        if isinstance(exc, InvalidParameterError):
            raise
        raise InvalidParameterError(f"cannot parse distribution {text!r}: {exc}") from exc
    raise InvalidParameterError(f"unknown distribution {text!r}")
