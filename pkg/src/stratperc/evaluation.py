"""Error measurement, mistake accounting, and scaling fits.

The closed form angle(v, u)/pi is the exact disagreement mass of two
homogeneous halfspaces under the uniform ball and serves as the primary
quality metric; Monte Carlo estimates are kept as an independent cross-check
and as the only metric for environments whose label noise moves err(v) away
from the angle form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .environment import EnvConfig, Hypothesis, _best_response_batch, label_batch
from .errors import InsufficientDataError
from .geometry import Rng, angle, normalize, sample_unit_ball_batch


@dataclass
class MistakeLedger:
    """Prediction bookkeeping over a full example stream.

    ``alg_mistakes`` and ``u_mistakes`` compare the algorithm's predictions and
    the optimal rule's predictions against the (hidden) labels on the same
    stream; ``disagreements_with_u`` counts predictions that differ from the
    optimal rule regardless of label.
    """

    alg_mistakes: int = 0
    u_mistakes: int = 0
    disagreements_with_u: int = 0
    draws: int = 0

    @property
    def additional(self) -> int:
        return self.alg_mistakes - self.u_mistakes

    def add_batch(self, preds: np.ndarray, u_signs: np.ndarray, ys: np.ndarray) -> None:
        self.alg_mistakes += int(np.count_nonzero(preds != ys))
        self.u_mistakes += int(np.count_nonzero(u_signs != ys))
        self.disagreements_with_u += int(np.count_nonzero(preds != u_signs))
        self.draws += len(preds)

    def merge(self, other: "MistakeLedger") -> None:
        self.alg_mistakes += other.alg_mistakes
        self.u_mistakes += other.u_mistakes
        self.disagreements_with_u += other.disagreements_with_u
        self.draws += other.draws

    def as_dict(self) -> dict:
        return {
            "alg_mistakes": self.alg_mistakes,
            "u_mistakes": self.u_mistakes,
            "additional": self.additional,
            "disagreements_with_u": self.disagreements_with_u,
            "draws": self.draws,
        }


def excess_error(v, u) -> float:
    """Disagreement mass of the halfspaces of v and u: angle(v, u) / pi."""
    return angle(v, u) / math.pi


def binomial_sigma(p: float, n: int) -> float:
    """Standard error of a proportion estimated from n Bernoulli draws."""
    return math.sqrt(max(p * (1.0 - p), 0.0) / n)


@dataclass(frozen=True)
class ErrorReport:
    theta: float
    excess_error_closed_form: float
    excess_error_mc: float
    standard_error: float
    n_samples: int
    error_rate_mc: float
    u_error_rate_mc: float
    strategic_path_equal: bool
    consistent: bool

    def as_dict(self) -> dict:
        return {
            "theta": self.theta,
            "excess_error_closed_form": self.excess_error_closed_form,
            "excess_error_mc": self.excess_error_mc,
            "standard_error": self.standard_error,
            "n_samples": self.n_samples,
            "error_rate_mc": self.error_rate_mc,
            "u_error_rate_mc": self.u_error_rate_mc,
            "strategic_path_equal": self.strategic_path_equal,
            "consistent": self.consistent,
        }


def mc_error(v, cfg: EnvConfig, n: int, rng: Rng, chunk: int = 200_000) -> ErrorReport:
    """Monte Carlo error report for the rule of ``v`` against fresh draws.

    Estimates err(v) = P[prediction != Y] along two matched paths: the
    true-feature rule sign(v . z) and the deployed strategic rule
    1[v . x >= 1/c] applied to best responses.  The two must agree draw by
    draw; the report records whether they did.  The excess estimate is
    err(v) - err(u) on the same stream, whose 4-sigma agreement with the
    closed form theta/pi is flagged, not assumed.
    """
    if n < 1000:
        raise InsufficientDataError(f"mc_error needs n >= 1000, got {n}")
    v = normalize(v)
    deployed = Hypothesis(normal=v, threshold=1.0 / cfg.c)
    diffs = 0          # [pred != y] - [u != y], summed
    sq_diffs = 0
    v_mist = 0
    u_mist = 0
    path_equal = True
    done = 0
    while done < n:
        m = min(chunk, n - done)
        Z = sample_unit_ball_batch(cfg.d, m, rng)
        Y = label_batch(Z, cfg, rng)
        X, _ = _best_response_batch(Z, deployed, cfg.c)
        pred_true = np.where(Z @ v >= 0.0, 1, -1)
        pred_strat = np.where(X @ v >= deployed.threshold, 1, -1)
        if not np.array_equal(pred_true, pred_strat):
            path_equal = False
        a = (pred_true != Y).astype(int)
        b = (np.where(Z @ cfg.u.normal >= 0.0, 1, -1) != Y).astype(int)
        v_mist += int(a.sum())
        u_mist += int(b.sum())
        diffs += int((a - b).sum())
        sq_diffs += int(((a - b) ** 2).sum())
        done += m
    theta = angle(v, cfg.u.normal)
    closed = theta / math.pi
    excess_mc = diffs / n
    var = max(sq_diffs / n - excess_mc**2, 0.0)
    se = math.sqrt(var / n)
    consistent = abs(excess_mc - closed) <= 4.0 * se if se > 0 else excess_mc == closed
    return ErrorReport(
        theta=theta,
        excess_error_closed_form=closed,
        excess_error_mc=excess_mc,
        standard_error=se,
        n_samples=n,
        error_rate_mc=v_mist / n,
        u_error_rate_mc=u_mist / n,
        strategic_path_equal=path_equal,
        consistent=consistent,
    )


def _loglog_term(d: int, epsilon: float, delta: float) -> float:
    return math.log(d) + math.log(1.0 / delta) + math.log(math.log(1.0 / epsilon))


def predictor_label_queries(d: int, epsilon: float, delta: float) -> float:
    return d * math.log(1.0 / epsilon) * _loglog_term(d, epsilon, delta)


def predictor_unlabeled_draws(d: int, epsilon: float, delta: float) -> float:
    return d * _loglog_term(d, epsilon, delta) ** 2 * (1.0 / epsilon) * math.log(1.0 / epsilon)


def predictor_additional_mistakes(d: int, epsilon: float, delta: float) -> float:
    return d * math.log(1.0 / epsilon) * _loglog_term(d, epsilon, delta) ** 2


PREDICTORS = {
    "label_queries": (predictor_label_queries, lambda t: t.total_labels),
    "unlabeled_draws": (predictor_unlabeled_draws, lambda t: t.total_draws),
    "additional_mistakes": (predictor_additional_mistakes, lambda t: t.ledger.additional),
}


@dataclass(frozen=True)
class ScalingFit:
    predictor: str
    constant: float
    r_squared: float
    n_cells: int
    cells: tuple = field(default_factory=tuple)  # (d, epsilon, observed_median, predicted)

    def as_dict(self) -> dict:
        return {
            "predictor": self.predictor,
            "constant": self.constant,
            "r_squared": self.r_squared,
            "n_cells": self.n_cells,
            "cells": [list(c) for c in self.cells],
        }


def fit_scaling(traces, predictor: str, min_cells: int = 6, min_seeds: int = 10) -> ScalingFit:
    """Through-origin least squares of per-cell medians against a named formula.

    Traces are grouped into (d, epsilon, delta) cells via their config echo;
    the observed total for the predictor's quantity is reduced to a median per
    cell.  Raises InsufficientDataError below ``min_cells`` grid points or
    ``min_seeds`` seeds in any cell.
    """
    if predictor not in PREDICTORS:
        raise KeyError(f"unknown predictor {predictor!r}; choose from {sorted(PREDICTORS)}")
    formula, extract = PREDICTORS[predictor]
    cells: dict[tuple, list[float]] = {}
    for t in traces:
        key = (t.config["d"], t.config["epsilon"], t.config["delta"])
        cells.setdefault(key, []).append(float(extract(t)))
    if len(cells) < min_cells:
        raise InsufficientDataError(f"need >= {min_cells} (d, epsilon) cells, got {len(cells)}")
    thin = [k for k, v in cells.items() if len(v) < min_seeds]
    if thin:
        raise InsufficientDataError(f"cells with < {min_seeds} seeds: {sorted(thin)}")
    keys = sorted(cells)
    obs = np.array([float(np.median(cells[k])) for k in keys])
    pred = np.array([formula(int(k[0]), float(k[1]), float(k[2])) for k in keys])
    constant = float(pred @ obs / (pred @ pred))
    resid = obs - constant * pred
    ss_tot = float(np.sum((obs - obs.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else 1.0
    cell_rows = tuple(
        (int(k[0]), float(k[1]), float(np.median(cells[k])), float(constant * formula(int(k[0]), float(k[1]), float(k[2]))))
        for k in keys
    )
    return ScalingFit(predictor=predictor, constant=constant, r_squared=r2, n_cells=len(keys), cells=cell_rows)
