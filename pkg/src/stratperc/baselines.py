"""Reference learners for label-complexity and mistake comparisons."""

from __future__ import annotations

import math

import numpy as np

from .environment import EnvConfig, Hypothesis, draw_example
from .errors import PreconditionViolatedError
from .evaluation import MistakeLedger
from .geometry import Rng, angle, normalize
from .learner import (
    EpochRecord,
    EpochSchedule,
    LabelOracle,
    RunTrace,
    outer_loop,
    predict,
    reflect_update,
)


def passive_strategic_perceptron(
    cfg: EnvConfig,
    oracle: LabelOracle,
    v0,
    epsilon: float,
    c: float,
    rng: Rng,
    max_rounds: int,
    check_every: int = 200,
    ledger: MistakeLedger | None = None,
) -> tuple[np.ndarray, RunTrace]:
    """Query every negatively classified observation; no band filter.

    Deploys (w, 1/c) like the active learner but spends a label on each
    negative and reflects on the misclassified ones.  Stops at ``max_rounds``
    draws or once the excess error theta(w, u)/pi (measured simulator-side
    every ``check_every`` draws) drops to ``epsilon``.  The run trace counts
    every query, which is the point of this comparator.
    """
    w = normalize(v0)
    threshold = 1.0 / c
    u = cfg.u.normal
    trace = RunTrace(learner="passive-strategic")
    if ledger is not None:
        trace.ledger = ledger
    theta_before = angle(w, u)
    labels = draws = mistakes = updates = 0
    for t in range(max_rounds):
        deployed = Hypothesis(normal=w, threshold=threshold)
        src, obs = draw_example(cfg, deployed, rng)
        pred = predict(deployed, obs.x)
        u_sign = 1 if float(u @ src.z) >= 0.0 else -1
        draws += 1
        if pred != u_sign:
            mistakes += 1
        trace.ledger.add_batch(
            np.array([pred]), np.array([u_sign]), np.array([src.y])
        )
        if pred == -1:
            y = oracle.query(src)
            labels += 1
            if obs.manipulated or not np.array_equal(obs.x, src.z):
                trace.purity_violations += 1
            proj = float(w @ obs.x)
            if y == 1 and proj < 0.0:
                w = normalize(reflect_update(w, normalize(obs.x)))
                updates += 1
        if (t + 1) % check_every == 0 and angle(w, u) / math.pi <= epsilon:
            break
    trace.epochs.append(
        EpochRecord(
            k=1,
            theta_before=theta_before,
            theta_after=angle(w, u),
            m_k=labels,
            b_k=math.nan,
            labels=labels,
            draws=draws,
            mistakes=mistakes,
            updates=updates,
        )
    )
    trace.final_theta = angle(w, u)
    return w, trace


def nonstrategic_active_perceptron(
    cfg: EnvConfig,
    oracle: LabelOracle,
    v0,
    epsilon: float,
    delta: float,
    schedule: EpochSchedule,
    rng: Rng,
    draw_cap_factor: float = 100.0,
    ledger: MistakeLedger | None = None,
    record_queries: bool = False,
) -> tuple[np.ndarray, RunTrace]:
    """The same two-layer learner against truthful agents at threshold 0.

    Requires an environment whose agents never manipulate (infinite unit
    cost); the deployed threshold 1/c is then exactly 0 and the control flow
    is identical to the strategic run, which is what the reduction argument
    exploits.
    """
    if math.isfinite(cfg.c):
        raise PreconditionViolatedError(
            "nonstrategic baseline needs a truthful environment; build one with truthful_config()"
        )
    v, trace = outer_loop(
        cfg,
        oracle,
        v0,
        epsilon,
        delta,
        schedule,
        cfg.c,
        rng,
        draw_cap_factor=draw_cap_factor,
        ledger=ledger,
        record_queries=record_queries,
        learner_name="nonstrategic-active",
    )
    return v, trace
