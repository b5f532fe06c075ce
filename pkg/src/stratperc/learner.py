"""Two-layer active halfspace learner for strategic agents.

The outer loop runs a geometric sequence of epochs; each epoch hands the
current hypothesis to an inner loop that deploys it with a raised positive
threshold (1/cost), queries labels only inside a narrow negative-side band of
the normalized observations, and applies norm-preserving reflection updates on
queried points whose true label is positive.  Because agents never gain by
manipulating into the negative region, every queried observation is
guaranteed untouched; the simulator cross-checks that guarantee and records
violations instead of trusting it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .environment import (
    PREDICT_NEGATIVE_THRESHOLD,
    EnvConfig,
    Hypothesis,
    TrueExample,
    draw_batch,
)
from .errors import (
    DrawBudgetExceededError,
    InvalidConfigError,
    PreconditionViolatedError,
)
from .evaluation import MistakeLedger
from .geometry import Rng, angle, band_fraction, normalize

# Schedule constants pinned by scripts/pilot_calibration.py: the smallest
# (C_m, C_b) grid point reaching >= 95% epoch-contraction success over 100
# realizable seeded runs at d = 5 (this point scored 100/100; narrow bands
# such as C_b = 1/4 need C_m >= 6 and ~35x the unlabeled draws).
DEFAULT_C_M = 1.0
DEFAULT_C_B = 8.0

LOG_FORM_THEOREM = "theorem"  # band log factor ln(k * m_k / delta_k)
LOG_FORM_LEMMA = "lemma"      # band log factor ln(m_k / delta_k)

# Band-search block sizes: grow geometrically so short searches stay cheap and
# long searches amortize per-draw overhead.
_BLOCKS = (256, 1024, 4096, 16384, 65536)

CSV_HEADER = "run_id,learner,k,theta_before,theta_after,m_k,b_k,labels_k,draws_k,mistakes_k,updates_k"


@dataclass(frozen=True)
class EpochSchedule:
    """Per-epoch iteration counts m_k and band widths b_k with their constants."""

    C_m: float
    C_b: float
    k0: int
    d: int
    epsilon: float
    delta: float
    band_log_form: str
    m: tuple[int, ...]
    b: tuple[float, ...]

    def m_k(self, k: int) -> int:
        return self.m[k - 1]

    def b_k(self, k: int) -> float:
        return self.b[k - 1]


def epoch_confidence(delta: float, k: int) -> float:
    return delta / (k * (k + 1))


def make_schedule(
    d: int,
    epsilon: float,
    delta: float,
    C_m: float = DEFAULT_C_M,
    C_b: float = DEFAULT_C_B,
    band_log_form: str = LOG_FORM_THEOREM,
) -> EpochSchedule:
    """Materialize k0 = ceil(log2(1/epsilon)) epochs of (m_k, b_k).

    m_k = ceil(C_m * d * (ln d + ln(k/delta_k))) with delta_k = delta/(k(k+1));
    b_k = C_b * 2^-k / (sqrt(d) * ln(arg)) where arg is k*m_k/delta_k in the
    default form and m_k/delta_k in the alternate one.
    """
    problems = []
    if d < 2:
        problems.append(f"d must be >= 2, got {d}")
    if not 0.0 < epsilon <= 0.5:
        problems.append(f"epsilon must be in (0, 1/2], got {epsilon}")
    if not 0.0 < delta < 1.0:
        problems.append(f"delta must be in (0, 1), got {delta}")
    if not C_m > 0.0:
        problems.append(f"C_m must be positive, got {C_m}")
    if not C_b > 0.0:
        problems.append(f"C_b must be positive, got {C_b}")
    if band_log_form not in (LOG_FORM_THEOREM, LOG_FORM_LEMMA):
        problems.append(f"band_log_form must be 'theorem' or 'lemma', got {band_log_form!r}")
    if problems:
        raise InvalidConfigError(problems)

    k0 = max(1, math.ceil(math.log2(1.0 / epsilon)))
    ms = []
    bs = []
    for k in range(1, k0 + 1):
        delta_k = epoch_confidence(delta, k)
        m_k = max(1, math.ceil(C_m * d * (math.log(d) + math.log(k / delta_k))))
        arg = (k * m_k / delta_k) if band_log_form == LOG_FORM_THEOREM else (m_k / delta_k)
        b_k = C_b * 2.0**-k / (math.sqrt(d) * math.log(arg))
        if not 0.0 < b_k < 1.0:
            raise InvalidConfigError(
                [f"b_{k} = {b_k} falls outside (0, 1); shrink C_b (currently {C_b})"]
            )
        ms.append(m_k)
        bs.append(b_k)
    return EpochSchedule(
        C_m=C_m, C_b=C_b, k0=k0, d=d, epsilon=epsilon, delta=delta,
        band_log_form=band_log_form, m=tuple(ms), b=tuple(bs),
    )


def predict(h: Hypothesis, x) -> int:
    """+1 iff normal . x >= threshold (boundary inclusive)."""
    return 1 if float(h.normal @ np.asarray(x, dtype=float)) >= h.threshold else -1


def in_band(w, x, b: float) -> bool:
    """Whether the normalized observation falls in [-b, -b/2] along w."""
    proj = float(np.asarray(w, dtype=float) @ normalize(x))
    return -b <= proj <= -b / 2.0


def reflect_update(w, x_hat) -> np.ndarray:
    """w' = w - 2 (w . x_hat) x_hat: flips the projection, preserves the norm.

    Only defined on misclassified directions (w . x_hat < 0); reflections on
    the positive side would move the hypothesis away from every consistent
    separator.
    """
    w = np.asarray(w, dtype=float)
    x_hat = np.asarray(x_hat, dtype=float)
    proj = float(w @ x_hat)
    if proj >= 0.0:
        raise PreconditionViolatedError(f"reflect_update requires w . x_hat < 0, got {proj}")
    return w - 2.0 * proj * x_hat


class LabelOracle:
    """Counting oracle revealing the hidden true label of an example."""

    def __init__(self):
        self.queries = 0

    def query(self, example: TrueExample) -> int:
        self.queries += 1
        return example.y


@dataclass
class EpochRecord:
    k: int
    theta_before: float
    theta_after: float
    m_k: int
    b_k: float
    labels: int
    draws: int
    mistakes: int
    updates: int


@dataclass
class RunTrace:
    """Per-epoch counters plus simulator-side diagnostics for one run.

    ``duration`` is in-memory only; serialized artifacts must be byte-stable
    across reruns, so wall-clock never reaches CSV/JSON.
    """

    epochs: list[EpochRecord] = field(default_factory=list)
    ledger: MistakeLedger = field(default_factory=MistakeLedger)
    run_id: str = ""
    learner: str = "active-strategic"
    seed: int = 0
    config: dict = field(default_factory=dict)
    final_theta: float = math.nan
    duration: float = 0.0
    purity_violations: int = 0
    band_violations: int = 0
    init: dict | None = None
    mc: dict | None = None
    queried: list = field(default_factory=list)

    @property
    def total_labels(self) -> int:
        n = sum(e.labels for e in self.epochs)
        return n + (self.init["labels"] if self.init else 0)

    @property
    def total_draws(self) -> int:
        n = sum(e.draws for e in self.epochs)
        return n + (self.init["draws"] if self.init else 0)

    @property
    def total_mistakes(self) -> int:
        n = sum(e.mistakes for e in self.epochs)
        return n + (self.init["mistakes"] if self.init else 0)

    @property
    def total_updates(self) -> int:
        n = sum(e.updates for e in self.epochs)
        return n + (self.init["updates"] if self.init else 0)

    def csv_rows(self) -> list[str]:
        rows = []
        for e in self.epochs:
            rows.append(
                ",".join(
                    [
                        self.run_id,
                        self.learner,
                        str(e.k),
                        repr(float(e.theta_before)),
                        repr(float(e.theta_after)),
                        str(e.m_k),
                        repr(float(e.b_k)),
                        str(e.labels),
                        str(e.draws),
                        str(e.mistakes),
                        str(e.updates),
                    ]
                )
            )
        return rows

    def to_summary_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "learner": self.learner,
            "seed": self.seed,
            "config": self.config,
            "totals": {
                "labels": self.total_labels,
                "draws": self.total_draws,
                "mistakes": self.total_mistakes,
                "updates": self.total_updates,
                **self.ledger.as_dict(),
            },
            "final": {
                "theta": self.final_theta,
                "excess_error": self.final_theta / math.pi,
            },
            "epochs": [
                {
                    "k": e.k,
                    "theta_before": e.theta_before,
                    "theta_after": e.theta_after,
                    "m_k": e.m_k,
                    # strict JSON has no NaN (bandless learners have no b_k)
                    "b_k": e.b_k if not math.isnan(e.b_k) else None,
                    "labels": e.labels,
                    "draws": e.draws,
                    "mistakes": e.mistakes,
                    "updates": e.updates,
                }
                for e in self.epochs
            ],
            "diagnostics": {
                "purity_violations": self.purity_violations,
                "band_violations": self.band_violations,
            },
            "init": self.init,
            "mc": self.mc,
        }


@dataclass
class InnerResult:
    w: np.ndarray
    labels: int = 0
    draws: int = 0
    mistakes: int = 0
    updates: int = 0
    purity_violations: int = 0
    band_violations: int = 0
    queried: list = field(default_factory=list)


def _sign_plus(values: np.ndarray) -> np.ndarray:
    return np.where(values >= 0.0, 1, -1)


def _block_size(i: int) -> int:
    return _BLOCKS[i] if i < len(_BLOCKS) else _BLOCKS[-1]


def inner_loop(
    cfg: EnvConfig,
    oracle: LabelOracle,
    w0,
    theta: float,
    delta: float,
    m: int,
    b: float,
    c: float,
    rng: Rng,
    draw_cap_factor: float = 100.0,
    ledger: MistakeLedger | None = None,
    record_queries: bool = False,
    draw_trace=None,
) -> InnerResult:
    """One epoch: exactly ``m`` query rounds at band width ``b``.

    Each round deploys (w_t, 1/c), draws fresh agents until one lands in the
    band -b <= w_t . x_hat <= -b/2, queries its label, and reflects on true
    positives.  Every drawn observation is predicted on and scored against
    sign(u . z); ``theta`` and ``delta`` are the epoch's nominal angle bound
    and confidence (inputs of record, not of control flow).
    """
    del theta, delta
    w = np.asarray(w0, dtype=float)
    threshold = 1.0 / c
    u = cfg.u.normal
    res = InnerResult(w=w)
    if m <= 0:
        return res  # zero rounds: the start vector, bit-unchanged
    max_draws = math.ceil(draw_cap_factor / band_fraction(b, cfg.d))
    for t in range(m):
        hit = None
        remaining = max_draws
        block_i = 0
        deployed = Hypothesis(normal=w, threshold=threshold)
        while hit is None:
            n = min(_block_size(block_i), remaining)
            block_i += 1
            if n <= 0:
                raise DrawBudgetExceededError(
                    f"band search exceeded {max_draws} draws in round {t} (b = {b:g}, d = {cfg.d})",
                    context={"round": t, "max_draws": max_draws, "b": b, "d": cfg.d},
                )
            batch = draw_batch(cfg, deployed, n, rng)
            norms = np.maximum(np.linalg.norm(batch.X, axis=1), 1e-300)
            proj = (batch.X @ w) / norms
            mask = (proj >= -b) & (proj <= -b / 2.0)
            idx = int(np.argmax(mask)) if mask.any() else -1
            used = idx + 1 if idx >= 0 else n
            preds = _sign_plus(batch.X[:used] @ w - threshold)
            u_signs = _sign_plus(batch.Z[:used] @ u)
            ys = batch.Y[:used]
            res.draws += used
            res.mistakes += int(np.count_nonzero(preds != u_signs))
            if ledger is not None:
                ledger.add_batch(preds, u_signs, ys)
            if draw_trace is not None:
                draw_trace.record_batch(
                    batch.Z[:used], batch.X[:used], ys, batch.manipulated[:used], preds
                )
            remaining -= used
            if idx >= 0:
                hit = batch.example(idx)
        src, obs = hit
        y = oracle.query(src)
        res.labels += 1
        if obs.manipulated or not np.array_equal(obs.x, src.z):
            res.purity_violations += 1
        if record_queries:
            res.queried.append((src.z.copy(), float(w @ obs.x / np.linalg.norm(obs.x)), y))
        if y == 1:
            x_hat = normalize(obs.x)
            w = normalize(reflect_update(w, x_hat))
            res.updates += 1
            after = float(w @ x_hat)
            if not (b / 2.0 - 1e-9 <= after <= b + 1e-9):
                res.band_violations += 1
    res.w = w
    return res


def outer_loop(
    cfg: EnvConfig,
    oracle: LabelOracle,
    v0,
    epsilon: float,
    delta: float,
    schedule: EpochSchedule,
    c: float,
    rng: Rng,
    draw_cap_factor: float = 100.0,
    ledger: MistakeLedger | None = None,
    record_queries: bool = False,
    draw_trace=None,
    learner_name: str = "active-strategic",
) -> tuple[np.ndarray, RunTrace]:
    """Run all k0 epochs of the schedule from v0, halving the angle target each time."""
    if not 0.0 < epsilon <= 0.5:
        raise InvalidConfigError([f"epsilon must be in (0, 1/2], got {epsilon}"])
    v = normalize(v0)
    trace = RunTrace(learner=learner_name)
    if ledger is not None:
        trace.ledger = ledger
    u = cfg.u.normal
    all_queried = []
    for k in range(1, schedule.k0 + 1):
        theta_before = angle(v, u)
        try:
            res = inner_loop(
                cfg,
                oracle,
                v,
                math.pi / 2.0**k,
                epoch_confidence(delta, k),
                schedule.m_k(k),
                schedule.b_k(k),
                c,
                rng,
                draw_cap_factor=draw_cap_factor,
                ledger=trace.ledger,
                record_queries=record_queries,
                draw_trace=draw_trace,
            )
        except DrawBudgetExceededError as exc:
            raise DrawBudgetExceededError(f"epoch {k}: {exc}", context={**exc.context, "epoch": k}) from exc
        v = res.w
        trace.epochs.append(
            EpochRecord(
                k=k,
                theta_before=theta_before,
                theta_after=angle(v, u),
                m_k=schedule.m_k(k),
                b_k=schedule.b_k(k),
                labels=res.labels,
                draws=res.draws,
                mistakes=res.mistakes,
                updates=res.updates,
            )
        )
        trace.purity_violations += res.purity_violations
        trace.band_violations += res.band_violations
        all_queried.extend(res.queried)
    trace.final_theta = angle(v, u)
    trace.queried = all_queried
    return v, trace


@dataclass
class VoteResult:
    choice: np.ndarray
    picked: str          # "plus" or "minus"
    queries: int
    draws: int
    mistakes: int
    m_plus: int
    m_minus: int
    purity_violations: int = 0


def disagreement_vote(
    cfg: EnvConfig,
    oracle: LabelOracle,
    v_plus,
    v_minus,
    delta: float,
    rng: Rng,
    draw_cap: int | None = None,
    ledger: MistakeLedger | None = None,
) -> VoteResult:
    """Vote between two candidate normals on their disagreement region.

    Deploys the constant-negative rule (so no agent manipulates), collects
    ceil(8 ln(6/delta)) observations where the candidates' homogeneous signs
    differ, queries each one's label, and returns the candidate disagreeing
    with fewer labels (ties to v_plus).
    """
    v_plus = normalize(v_plus)
    v_minus = normalize(v_minus)
    n_needed = math.ceil(8.0 * math.log(6.0 / delta))
    # the phase only runs when angle(v-, v+) > pi/20, so the disagreement
    # region has mass > 1/20; budget 20 * n_needed expected-draw equivalents
    if draw_cap is None:
        draw_cap = math.ceil(100.0 * 20.0 * n_needed)
    deployed = Hypothesis(normal=v_plus, threshold=PREDICT_NEGATIVE_THRESHOLD)
    u = cfg.u.normal
    m_plus = 0
    m_minus = 0
    queries = 0
    draws = 0
    mistakes = 0
    purity = 0
    collected = 0
    while collected < n_needed:
        n = min(4096, draw_cap - draws)
        if n <= 0:
            raise DrawBudgetExceededError(
                f"disagreement collection exceeded {draw_cap} draws ({collected}/{n_needed} found)",
                context={"draw_cap": draw_cap, "collected": collected, "needed": n_needed},
            )
        batch = draw_batch(cfg, deployed, n, rng)
        mask = _sign_plus(batch.X @ v_plus) != _sign_plus(batch.X @ v_minus)
        hits = np.flatnonzero(mask)[: n_needed - collected]
        used = int(hits[-1]) + 1 if len(hits) else n
        preds = np.full(used, -1)
        u_signs = _sign_plus(batch.Z[:used] @ u)
        draws += used
        mistakes += int(np.count_nonzero(preds != u_signs))
        if ledger is not None:
            ledger.add_batch(preds, u_signs, batch.Y[:used])
        for i in hits:
            src, obs = batch.example(int(i))
            y = oracle.query(src)
            queries += 1
            if obs.manipulated or not np.array_equal(obs.x, src.z):
                purity += 1
            if int(_sign_plus(obs.x @ v_plus)) != y:
                m_plus += 1
            if int(_sign_plus(obs.x @ v_minus)) != y:
                m_minus += 1
        collected += len(hits)
    if m_plus <= m_minus:
        return VoteResult(v_plus, "plus", queries, draws, mistakes, m_plus, m_minus, purity)
    return VoteResult(v_minus, "minus", queries, draws, mistakes, m_plus, m_minus, purity)


@dataclass
class InitResult:
    v: np.ndarray
    shortcut: bool
    disagreement_queries: int
    labels: int
    draws: int
    mistakes: int
    updates: int
    purity_violations: int
    v_plus: np.ndarray
    v_minus: np.ndarray
    trace_plus: RunTrace
    trace_minus: RunTrace
    vote: VoteResult | None = None

    def as_dict(self) -> dict:
        return {
            "shortcut": self.shortcut,
            "disagreement_queries": self.disagreement_queries,
            "labels": self.labels,
            "draws": self.draws,
            "mistakes": self.mistakes,
            "updates": self.updates,
        }


def initialize(
    cfg: EnvConfig,
    oracle: LabelOracle,
    delta: float,
    c: float,
    rng: Rng,
    C_m: float = DEFAULT_C_M,
    C_b: float = DEFAULT_C_B,
    band_log_form: str = LOG_FORM_THEOREM,
    draw_cap_factor: float = 100.0,
    ledger: MistakeLedger | None = None,
) -> InitResult:
    """Find a starting vector with an acute angle to the optimum.

    Runs the full learner from e1 and from -e1 (target error 1/16, confidence
    delta/3 each); if the two candidates nearly agree (angle <= pi/20) the
    first is returned immediately, otherwise a small labeled vote on their
    disagreement region picks the better one.
    """
    e1 = np.zeros(cfg.d)
    e1[0] = 1.0
    schedule = make_schedule(cfg.d, 1.0 / 16.0, delta / 3.0, C_m, C_b, band_log_form)
    v_plus, trace_plus = outer_loop(
        cfg, oracle, e1, 1.0 / 16.0, delta / 3.0, schedule, c, rng,
        draw_cap_factor=draw_cap_factor, ledger=ledger,
    )
    v_minus, trace_minus = outer_loop(
        cfg, oracle, -e1, 1.0 / 16.0, delta / 3.0, schedule, c, rng,
        draw_cap_factor=draw_cap_factor, ledger=ledger,
    )
    labels = trace_plus.total_labels + trace_minus.total_labels
    draws = trace_plus.total_draws + trace_minus.total_draws
    mistakes = trace_plus.total_mistakes + trace_minus.total_mistakes
    updates = trace_plus.total_updates + trace_minus.total_updates
    purity = trace_plus.purity_violations + trace_minus.purity_violations
    if angle(v_minus, v_plus) <= math.pi / 20.0:
        return InitResult(
            v=v_plus, shortcut=True, disagreement_queries=0,
            labels=labels, draws=draws, mistakes=mistakes, updates=updates,
            purity_violations=purity, v_plus=v_plus, v_minus=v_minus,
            trace_plus=trace_plus, trace_minus=trace_minus,
        )
    vote = disagreement_vote(
        cfg, oracle, v_plus, v_minus, delta, rng,
        draw_cap=math.ceil(draw_cap_factor * 20.0 * math.ceil(8.0 * math.log(6.0 / delta))),
        ledger=ledger,
    )
    return InitResult(
        v=vote.choice, shortcut=False, disagreement_queries=vote.queries,
        labels=labels + vote.queries, draws=draws + vote.draws,
        mistakes=mistakes + vote.mistakes, updates=updates,
        purity_violations=purity + vote.purity_violations,
        v_plus=v_plus, v_minus=v_minus, trace_plus=trace_plus, trace_minus=trace_minus,
        vote=vote,
    )
