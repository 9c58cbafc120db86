"""Randomized work stealing versus sharing in large server farms.

The mean-field limit of N servers under either paradigm is an M/PH/1 queue
with negative customers. :mod:`stealshare.qbd` solves it,
:mod:`stealshare.compare` decides which paradigm wins at a matched probe
budget, :mod:`stealshare.bounds` holds analytic bounds and
:mod:`stealshare.sim` validates everything by simulation.
"""

__version__ = "0.1.0"

from .errors import StealShareError  # noqa: E402
from .phasetype import PhaseTypeDist, erlang, exponential, fit_hyperexp, hyperexp, hypoexp, ph  # noqa: E402
from .qbd import mean_response, solve, tail_prob  # noqa: E402
from .compare import decide, lambda_star, match_r_share, r_star  # noqa: E402

__all__ = [
    "PhaseTypeDist",
    "StealShareError",
    "decide",
    "erlang",
    "exponential",
    "fit_hyperexp",
    "hyperexp",
    "hypoexp",
    "lambda_star",
    "match_r_share",
    "mean_response",
    "ph",
    "r_star",
    "solve",
    "tail_prob",
]
