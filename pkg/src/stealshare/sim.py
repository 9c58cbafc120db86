"""Discrete-event simulation of N servers with randomized stealing or sharing.

Each server has its own Poisson(``lam``) arrival stream and serves FCFS.
Under stealing, idle servers probe at rate ``r`` and take the job at the
back of a random peer's queue if one is waiting. Under sharing, servers with
a waiting job probe at rate ``r`` and hand that job to the peer if it is idle.
Probes and transfers are instantaneous; a job in service never moves.

Replications are independent, seeded from one master seed, and reported with
Student-t confidence intervals over the run means.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import warnings
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np
from scipy import stats

from . import _simkernel as kernel
from .errors import InsufficientDataError, InvalidParameterError, StabilityError
from .phasetype import PhaseTypeDist, to_descriptor

log = logging.getLogger(__name__)

INITIAL_QUEUE_CAPACITY = 64


class Strategy(str, Enum):
    STEAL = "steal"
    SHARE = "share"


@dataclass(frozen=True)
class SimConfig:
    dist: PhaseTypeDist
    lam: float
    r: float
    strategy: Strategy = Strategy.STEAL
    n_servers: int = 1000
    horizon: float = 5000.0
    warmup_fraction: float = 0.33
    runs: int = 20
    seed: int = 0
    force: bool = False

    def __post_init__(self):
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        if self.n_servers < 2:
            raise InvalidParameterError("need at least two servers")
        if not self.lam > 0:
            raise InvalidParameterError("arrival rate must be positive")
        if self.r < 0:
            raise InvalidParameterError("probe rate must be >= 0")
        if not self.horizon > 0:
            raise InvalidParameterError("horizon must be positive")
        if not 0 <= self.warmup_fraction < 1:
            raise InvalidParameterError("warmup fraction must lie in [0, 1)")
        if self.runs < 1:
            raise InvalidParameterError("runs must be >= 1")
        if self.lam >= 1:
            if not self.force:
                raise StabilityError(f"lambda={self.lam} >= 1 is unstable; pass force=True to run anyway")
            warnings.warn(f"simulating an unstable system (lambda={self.lam})", RuntimeWarning)

    @property
    def warmup(self) -> float:
        return self.warmup_fraction * self.horizon

    def to_dict(self) -> dict:
        return {
            "dist": to_descriptor(self.dist),
            "lambda": self.lam,
            "r": self.r,
            "strategy": self.strategy.value,
            "n_servers": self.n_servers,
            "horizon": self.horizon,
            "warmup_fraction": self.warmup_fraction,
            "runs": self.runs,
            "seed": self.seed,
        }


@dataclass
class RunResult:
    run: int
    seed: int
    mean_response: float
    jobs_completed: int
    probe_rate: float
    transfer_rate: float
    mean_queue_length: float
    tail_fractions: list[float]
    max_queue: int
    lam: float

    @property
    def littles_residual(self) -> float:
        """``|E[Q] - lam E[T]|`` for this run."""
        return abs(self.mean_queue_length - self.lam * self.mean_response)


@dataclass
class SimReport:
    """Aggregated results over all replications (95% Student-t intervals)."""

    config: dict
    mean_response: float
    ci_halfwidth: float
    per_run_means: list[float]
    observed_overall_probe_rate: float
    probe_rate_ci: float
    mean_queue_length: float
    queue_length_ci: float
    transfer_count_rate: float
    tail_fractions: dict[int, float]
    tail_ci: dict[int, float]
    littles_residual: float
    runs: list[RunResult] = field(repr=False, default_factory=list)

    def to_dict(self, include_runs=False) -> dict:
        d = asdict(self)
        if not include_runs:
            d.pop("runs")
        d["tail_fractions"] = {str(k): v for k, v in self.tail_fractions.items()}
        d["tail_ci"] = {str(k): v for k, v in self.tail_ci.items()}
        return _finite(d)

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    def runs_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["run", "mean_response", "jobs_completed", "probe_rate"])
        for rr in self.runs:
            w.writerow([rr.run, repr(rr.mean_response), rr.jobs_completed, repr(rr.probe_rate)])
        return buf.getvalue()


def _finite(obj):
    if isinstance(obj, float):
        return obj if np.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


def ci_halfwidth(samples, level: float = 0.95) -> float:
    """Half-width of the Student-t interval for the mean; ``inf`` for one sample."""
    x = np.asarray(samples, dtype=float)
    if x.size < 2:
        return float("inf")
    q = stats.t.ppf(0.5 + level / 2, x.size - 1)
    return float(q * x.std(ddof=1) / np.sqrt(x.size))


def _phase_tables(dist: PhaseTypeDist):
    S = dist.S
    rates = -np.diag(S).copy()
    jumps = S / rates[:, None]
    np.fill_diagonal(jumps, 0.0)
    return np.cumsum(dist.alpha), rates, np.ascontiguousarray(np.cumsum(jumps, axis=1))


def run_seeds(seed: int, runs: int) -> list[int]:
    """Per-replication 32-bit seeds derived from the master seed."""
    children = np.random.SeedSequence(seed).spawn(runs)
    return [int(c.generate_state(1, dtype=np.uint32)[0]) for c in children]


def simulate_run(cfg: SimConfig, run: int, seed: int) -> RunResult:
    alpha_cum, rates, jump_cum = _phase_tables(cfg.dist)
    strategy = kernel.STEAL if cfg.strategy is Strategy.STEAL else kernel.SHARE
    st = kernel.run_replication(
        cfg.n_servers,
        float(cfg.lam),
        float(cfg.r),
        strategy,
        alpha_cum,
        rates,
        jump_cum,
        float(cfg.horizon),
        float(cfg.warmup),
        seed,
        INITIAL_QUEUE_CAPACITY,
    )
    completed = int(st[kernel.ST_COMPLETED])
    if completed == 0:
        raise InsufficientDataError(f"run {run}: no job completed after warm-up")
    norm = st[kernel.ST_OBS_TIME] * cfg.n_servers
    rr = RunResult(
        run=run,
        seed=seed,
        mean_response=float(st[kernel.ST_RESP_SUM] / completed),
        jobs_completed=completed,
        probe_rate=float(st[kernel.ST_PROBES] / norm),
        transfer_rate=float(st[kernel.ST_TRANSFERS] / norm),
        mean_queue_length=float(st[kernel.ST_AREA_JOBS] / norm),
        tail_fractions=[float(st[i] / norm) for i in (kernel.ST_AREA_GE1, kernel.ST_AREA_GE2, kernel.ST_AREA_GE3)],
        max_queue=int(st[kernel.ST_MAX_QUEUE]),
        lam=cfg.lam,
    )
    log.debug("run %d: E[T]=%.5f, %d jobs", run, rr.mean_response, completed)
    return rr


def simulate(cfg: SimConfig) -> SimReport:
    """Run all replications of ``cfg`` sequentially and aggregate."""
    results = [simulate_run(cfg, i, s) for i, s in enumerate(run_seeds(cfg.seed, cfg.runs))]
    return aggregate(cfg, results)


def aggregate(cfg: SimConfig, results: list[RunResult]) -> SimReport:
    results = sorted(results, key=lambda rr: rr.run)
    means = [rr.mean_response for rr in results]
    probes = [rr.probe_rate for rr in results]
    queues = [rr.mean_queue_length for rr in results]
    tails = np.array([rr.tail_fractions for rr in results])
    return SimReport(
        config=cfg.to_dict(),
        mean_response=float(np.mean(means)),
        ci_halfwidth=ci_halfwidth(means),
        per_run_means=means,
        observed_overall_probe_rate=float(np.mean(probes)),
        probe_rate_ci=ci_halfwidth(probes),
        mean_queue_length=float(np.mean(queues)),
        queue_length_ci=ci_halfwidth(queues),
        transfer_count_rate=float(np.mean([rr.transfer_rate for rr in results])),
        tail_fractions={k + 1: float(tails[:, k].mean()) for k in range(3)},
        tail_ci={k + 1: ci_halfwidth(tails[:, k]) for k in range(3)},
        littles_residual=max(rr.littles_residual for rr in results),
        runs=results,
    )


def observed_probe_rate(cfg: SimConfig) -> float:
    """Probes per server per unit time after warm-up, averaged over runs."""
    if cfg.r == 0:
        return 0.0
    return simulate(cfg).observed_overall_probe_rate
