"""Property suites behind the ``verify`` subcommand.

Each suite re-checks a family of simulator/learner guarantees on pinned seeds
and reports a pass/fail table.  Statistical checks run at the repo-wide
levels: 1% significance for distribution tests, 3-4 sigma for mean tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .baselines import nonstrategic_active_perceptron
from .environment import (
    EnvConfig,
    Hypothesis,
    boundary_band_noise,
    draw_batch,
    random_flip_noise,
    realizable_noise,
    truthful_config,
)
from .evaluation import binomial_sigma, fit_scaling
from .config import nu_max
from .geometry import (
    make_rng,
    normalize,
    sample_ball_in_band,
    sample_sphere_in_band,
    sample_unit_ball_batch,
    sample_unit_sphere,
    sample_unit_sphere_batch,
    angle,
)
from .learner import LabelOracle, disagreement_vote, initialize, make_schedule, outer_loop

P_LEVEL = 0.01


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _realizable_env(d: int, seed: int, c: float = 2.0) -> EnvConfig:
    u = sample_unit_sphere(d, make_rng(seed, 1))
    return EnvConfig(d=d, u=Hypothesis(normal=u, threshold=0.0), c=c,
                     noise=realizable_noise(), seed=seed)


def _acute_start(cfg: EnvConfig, seed: int) -> np.ndarray:
    v0 = sample_unit_sphere(cfg.d, make_rng(seed, 2))
    return v0 if float(v0 @ cfg.u.normal) >= 0.0 else -v0


def _utility(x: np.ndarray, z: np.ndarray, v: np.ndarray, c: float) -> float:
    value = 1.0 if float(v @ x) >= 1.0 / c else 0.0
    return value - c * float(np.linalg.norm(x - z))


def check_best_response_oracle(instances: int = 300, grid: int = 3000, seed: int = 101) -> CheckResult:
    """Closed-form responses beat a brute-force grid of candidate reports."""
    from .environment import best_response

    rng = make_rng(seed)
    worst = math.inf
    for _ in range(instances):
        d = int(rng.integers(2, 7))
        v = sample_unit_sphere(d, rng)
        c = float(rng.uniform(1.1, 5.0))
        z = sample_unit_ball_batch(d, 1, rng)[0]
        obs = best_response(z, Hypothesis(normal=v, threshold=1.0 / c), c)
        got = _utility(obs.x, z, v, c)
        # candidates: z itself, the closed-form projection point, and a grid in
        # the radius-(1/c) ball around z (moves beyond 1/c always lose)
        cand = z + sample_unit_ball_batch(d, grid, rng) / c
        p = float(v @ z)
        proj = z + (1.0 / c - p) * v
        best_other = max(
            _utility(z, z, v, c),
            _utility(proj, z, v, c),
            max(_utility(x, z, v, c) for x in cand),
        )
        worst = min(worst, got - best_other)
    return CheckResult(
        "best-response-optimality", worst >= -1e-9,
        f"min(utility(closed form) - utility(best candidate)) = {worst:.2e} over {instances} instances",
    )


def check_prediction_equivalence(n: int = 100_000, seed: int = 102) -> CheckResult:
    """Strategic rule at threshold 1/c equals sign(v . z) with zero exceptions."""
    rng = make_rng(seed)
    bad = 0
    for d in (2, 4, 8):
        v = sample_unit_sphere(d, rng)
        c = float(rng.uniform(0.5, 5.0))
        cfg = EnvConfig(d=d, u=Hypothesis(normal=v, threshold=0.0), c=c, seed=seed)
        batch = draw_batch(cfg, Hypothesis(normal=v, threshold=1.0 / c), n // 3, rng)
        strategic = batch.X @ v >= 1.0 / c
        truthful = batch.Z @ v >= 0.0
        bad += int(np.count_nonzero(strategic != truthful))
    return CheckResult("prediction-equivalence", bad == 0, f"{bad} mismatches over ~{n} draws")


def check_unmanipulated_negatives(n: int = 50_000, seed: int = 103) -> CheckResult:
    """Negatively classified observations are bit-identical to their truths."""
    rng = make_rng(seed)
    d = 5
    v = sample_unit_sphere(d, rng)
    c = 2.0
    cfg = EnvConfig(d=d, u=Hypothesis(normal=v, threshold=0.0), c=c, seed=seed)
    batch = draw_batch(cfg, Hypothesis(normal=v, threshold=1.0 / c), n, rng)
    neg = batch.X @ v < 1.0 / c
    ok = bool(
        np.array_equal(batch.X[neg], batch.Z[neg]) and not batch.manipulated[neg].any()
    )
    return CheckResult("unmanipulated-negatives", ok, f"{int(neg.sum())} negatives checked bit-identically")


def check_coupling(ds=(2, 5, 10), n: int = 10_000, seed: int = 104) -> CheckResult:
    """Normalized band-conditioned ball draws match band-conditioned sphere draws."""
    rng = make_rng(seed)
    details = []
    ok = True
    for d in ds:
        w = sample_unit_sphere(d, rng)
        r = sample_unit_sphere(d, rng)
        b = 0.5 / math.sqrt(d)
        ball = np.array([normalize(z) for z in sample_ball_in_band(w, b, n, rng)])
        sphere = sample_sphere_in_band(w, b, n, rng)
        p_w = stats.ks_2samp(ball @ w, sphere @ w).pvalue
        p_r = stats.ks_2samp(ball @ r, sphere @ r).pvalue
        details.append(f"d={d}: p_w={p_w:.3f} p_r={p_r:.3f}")
        ok = ok and p_w >= P_LEVEL and p_r >= P_LEVEL
    return CheckResult("band-coupling-ks", ok, "; ".join(details))


def check_conditional_uniformity(n: int = 10_000, seed: int = 105) -> CheckResult:
    """Strategic negatives inside a sub-band look like direct conditioned ball draws."""
    rng = make_rng(seed)
    d = 4
    cfg = _realizable_env(d, seed)
    v = sample_unit_sphere(d, rng)
    b = 0.6 / math.sqrt(d)
    deployed = Hypothesis(normal=v, threshold=1.0 / cfg.c)

    collected = []
    while sum(len(a) for a in collected) < n:
        batch = draw_batch(cfg, deployed, 200_000, rng)
        norms = np.linalg.norm(batch.X, axis=1)
        proj = (batch.X @ v) / np.maximum(norms, 1e-300)
        mask = (batch.X @ v < deployed.threshold) & (proj >= -b) & (proj <= -b / 2.0)
        collected.append(batch.X[mask])
    observed = np.concatenate(collected)[:n]
    direct = sample_ball_in_band(v, b, n, rng)
    r = sample_unit_sphere(d, rng)
    p_proj = stats.ks_2samp(observed @ v, direct @ v).pvalue
    p_r = stats.ks_2samp(observed @ r, direct @ r).pvalue
    p_norm = stats.ks_2samp(np.linalg.norm(observed, axis=1), np.linalg.norm(direct, axis=1)).pvalue
    ok = min(p_proj, p_r, p_norm) >= P_LEVEL
    return CheckResult(
        "conditional-uniformity-ks", ok,
        f"p_proj={p_proj:.3f} p_rand={p_r:.3f} p_norm={p_norm:.3f}",
    )


def check_error_closed_form(pairs: int = 5, n: int = 200_000, seed: int = 106) -> CheckResult:
    """Monte Carlo disagreement within 4 sigma of angle(v, u)/pi."""
    rng = make_rng(seed)
    d = 6
    worst = 0.0
    for _ in range(pairs):
        v = sample_unit_sphere(d, rng)
        u = sample_unit_sphere(d, rng)
        Z = sample_unit_ball_batch(d, n, rng)
        mc = float(np.mean((Z @ v >= 0.0) != (Z @ u >= 0.0)))
        p = angle(v, u) / math.pi
        sigma = binomial_sigma(p, n)
        worst = max(worst, abs(mc - p) / sigma)
    return CheckResult("error-closed-form-mc", worst <= 4.0, f"worst |mc - theta/pi| = {worst:.2f} sigma")


def check_noise_budget(n: int = 100_000, seed: int = 107) -> CheckResult:
    """Empirical disagreement with sign(u . z) stays within the nu budget."""
    rng = make_rng(seed)
    d = 4
    u = sample_unit_sphere(d, rng)
    details = []
    ok = True
    for noise, nu in ((random_flip_noise(0.1), 0.1), (boundary_band_noise(0.05, d), 0.05)):
        cfg = EnvConfig(d=d, u=Hypothesis(normal=u, threshold=0.0), c=2.0, noise=noise, seed=seed)
        Z = sample_unit_ball_batch(d, n, rng)
        from .environment import label_batch

        Y = label_batch(Z, cfg, rng)
        rate = float(np.mean(Y != np.where(Z @ u >= 0.0, 1, -1)))
        bound = nu + 3.0 * binomial_sigma(nu, n)
        details.append(f"{noise.kind}: rate={rate:.4f} <= {bound:.4f}")
        ok = ok and rate <= bound
    return CheckResult("noise-budget", ok, "; ".join(details))


def check_epoch_contraction(runs: int = 30, d: int = 5, epsilon: float = 0.05,
                            delta: float = 0.1, seed_base: int = 0) -> CheckResult:
    good = 0
    for seed in range(seed_base, seed_base + runs):
        cfg = _realizable_env(d, seed)
        schedule = make_schedule(d, epsilon, delta)
        _, trace = outer_loop(
            cfg, LabelOracle(), _acute_start(cfg, seed), epsilon, delta,
            schedule, cfg.c, make_rng(seed, 0),
        )
        good += all(e.theta_after <= math.pi / 2.0 ** (e.k + 1) for e in trace.epochs)
    return CheckResult(
        "epoch-contraction", good >= math.ceil(0.9 * runs),
        f"{good}/{runs} runs contracted every epoch",
    )


def check_end_to_end(noise_kind: str, runs: int = 20, d: int = 5, epsilon: float = 0.05,
                     delta: float = 0.1, seed_base: int = 200) -> CheckResult:
    good = 0
    purity = 0
    for seed in range(seed_base, seed_base + runs):
        base = _realizable_env(d, seed)
        if noise_kind == "random-flip":
            nu = nu_max(epsilon, d, delta) / 2.0
            cfg = EnvConfig(d=d, u=base.u, c=base.c, noise=random_flip_noise(nu), seed=seed)
        else:
            cfg = base
        schedule = make_schedule(d, epsilon, delta)
        _, trace = outer_loop(
            cfg, LabelOracle(), _acute_start(cfg, seed), epsilon, delta,
            schedule, cfg.c, make_rng(seed, 0),
        )
        good += trace.final_theta / math.pi <= epsilon
        purity += trace.purity_violations
    name = f"end-to-end-{noise_kind}"
    ok = good >= math.ceil(0.9 * runs) and purity == 0
    return CheckResult(name, ok, f"{good}/{runs} runs reached excess <= {epsilon}; {purity} purity violations")


def check_label_budget(seed_base: int = 400) -> CheckResult:
    """Queries equal the schedule exactly and fit the theorem form."""
    traces = []
    exact = True
    for d in (3, 5):
        for epsilon in (1 / 8, 1 / 16, 1 / 32):
            schedule = make_schedule(d, epsilon, 0.1)
            for seed in range(seed_base, seed_base + 10):
                cfg = _realizable_env(d, seed)
                _, trace = outer_loop(
                    cfg, LabelOracle(), _acute_start(cfg, seed), epsilon, 0.1,
                    schedule, cfg.c, make_rng(seed, 0),
                )
                exact = exact and trace.total_labels == sum(schedule.m)
                trace.config = {"d": d, "epsilon": epsilon, "delta": 0.1}
                traces.append(trace)
    fit = fit_scaling(traces, "label_queries")
    ok = exact and fit.r_squared >= 0.85
    return CheckResult(
        "label-budget-shape", ok,
        f"queries == sum(m_k): {exact}; R^2 = {fit.r_squared:.3f} (C = {fit.constant:.2f})",
    )


def check_mistake_decay(runs: int = 30, seed_base: int = 500) -> CheckResult:
    d, epsilon, delta = 5, 0.05, 0.1
    good = 0
    for seed in range(seed_base, seed_base + runs):
        cfg = _realizable_env(d, seed)
        schedule = make_schedule(d, epsilon, delta)
        _, trace = outer_loop(
            cfg, LabelOracle(), _acute_start(cfg, seed), epsilon, delta,
            schedule, cfg.c, make_rng(seed, 0),
        )
        first = trace.epochs[0]
        last = trace.epochs[-1]
        r1 = first.mistakes / max(first.draws, 1)
        rk = last.mistakes / max(last.draws, 1)
        good += rk <= r1 / 1.5
    return CheckResult(
        "mistake-rate-decay", good >= math.ceil(0.8 * runs),
        f"{good}/{runs} runs cut the per-epoch mistake rate by >= 1.5x",
    )


def check_strategic_reduction(seed: int = 600) -> CheckResult:
    """Seed-matched strategic and truthful runs are identical bit for bit."""
    d, epsilon, delta = 4, 1 / 16, 0.1
    cfg = _realizable_env(d, seed)
    v0 = _acute_start(cfg, seed)
    schedule = make_schedule(d, epsilon, delta)
    v_s, t_s = outer_loop(cfg, LabelOracle(), v0, epsilon, delta, schedule, cfg.c,
                          make_rng(seed, 0), record_queries=True)
    tcfg = truthful_config(cfg)
    v_n, t_n = nonstrategic_active_perceptron(tcfg, LabelOracle(), v0, epsilon, delta,
                                              schedule, make_rng(seed, 0), record_queries=True)
    same_v = bool(np.array_equal(v_s, v_n))
    same_q = len(t_s.queried) == len(t_n.queried) and all(
        np.array_equal(a[0], b[0]) for a, b in zip(t_s.queried, t_n.queried)
    )
    same_counts = [(e.labels, e.draws, e.mistakes, e.updates) for e in t_s.epochs] == [
        (e.labels, e.draws, e.mistakes, e.updates) for e in t_n.epochs
    ]
    ok = same_v and same_q and same_counts
    return CheckResult(
        "strategic-reduction", ok,
        f"final v identical: {same_v}; queried points identical: {same_q}; counters identical: {same_counts}",
    )


def check_init_guarantee(runs: int = 30, d: int = 4, delta: float = 0.1,
                         seed_base: int = 700) -> CheckResult:
    good = 0
    purity = 0
    shortcut_ok = True
    for seed in range(seed_base, seed_base + runs):
        cfg = _realizable_env(d, seed)
        res = initialize(cfg, LabelOracle(), delta, cfg.c, make_rng(seed, 0))
        good += angle(res.v, cfg.u.normal) <= math.pi / 4.0
        purity += res.purity_violations
        if res.shortcut and res.disagreement_queries != 0:
            shortcut_ok = False
        if not res.shortcut and res.disagreement_queries != math.ceil(8.0 * math.log(6.0 / delta)):
            shortcut_ok = False
    ok = good >= math.ceil(0.9 * runs) and purity == 0 and shortcut_ok
    return CheckResult(
        "init-guarantee", ok,
        f"{good}/{runs} runs within pi/4; {purity} purity violations; query counts consistent: {shortcut_ok}",
    )


def check_vote_phase(seed: int = 800) -> CheckResult:
    """Forced disagreement vote: exact sample size, better candidate wins."""
    d, delta = 4, 0.1
    cfg = _realizable_env(d, seed)
    u = cfg.u.normal
    rng = make_rng(seed, 5)
    span = sample_unit_sphere(d, rng)
    span = normalize(span - (span @ u) * u)
    good = normalize(u + 0.1 * span)            # ~6 degrees off
    bad = normalize(-u + 0.3 * span)            # nearly antipodal
    oracle = LabelOracle()
    vote = disagreement_vote(cfg, oracle, bad, good, delta, make_rng(seed, 0))
    expect = math.ceil(8.0 * math.log(6.0 / delta))
    ok = vote.queries == expect == oracle.queries and bool(np.array_equal(vote.choice, good))
    return CheckResult(
        "vote-phase", ok,
        f"queries = {vote.queries} (expected {expect}); picked {vote.picked} "
        f"(m+ = {vote.m_plus}, m- = {vote.m_minus})",
    )


SUITES = {
    "lemmas": (
        check_best_response_oracle,
        check_prediction_equivalence,
        check_unmanipulated_negatives,
        check_coupling,
        check_conditional_uniformity,
        check_error_closed_form,
        check_noise_budget,
    ),
    "theorem": (
        check_epoch_contraction,
        lambda: check_end_to_end("realizable"),
        lambda: check_end_to_end("random-flip", seed_base=300),
        check_label_budget,
        check_mistake_decay,
        check_strategic_reduction,
    ),
    "init": (
        check_init_guarantee,
        check_vote_phase,
    ),
}


def run_suite(name: str) -> list[CheckResult]:
    return [fn() for fn in SUITES[name]]
