import io
import math

import numpy as np
import pytest
from scipy import stats

from stratperc.environment import (
    PREDICT_NEGATIVE_THRESHOLD,
    DrawTraceWriter,
    EnvConfig,
    Hypothesis,
    best_response,
    boundary_band_noise,
    calibrate_band_radius,
    draw_batch,
    draw_example,
    label,
    label_batch,
    random_flip_noise,
    realizable_noise,
    truthful_config,
)
from stratperc.errors import InvalidCostError, PreconditionViolatedError
from stratperc.geometry import (
    ball_margin_mass,
    make_rng,
    sample_unit_ball_batch,
    sample_unit_sphere,
)

from conftest import realizable_env

E1 = np.array([1.0, 0.0])


def utility(x, z, v, c):
    value = 1.0 if float(v @ x) >= 1.0 / c else 0.0
    return value - c * float(np.linalg.norm(np.asarray(x) - z))


class TestHypothesis:
    def test_requires_unit_normal(self):
        with pytest.raises(PreconditionViolatedError):
            Hypothesis(normal=np.array([1.0, 1.0]), threshold=0.0)

    def test_rejects_negative_threshold(self):
        with pytest.raises(PreconditionViolatedError):
            Hypothesis(normal=E1, threshold=-0.1)

    def test_infinite_threshold_sentinel(self):
        h = Hypothesis(normal=E1, threshold=PREDICT_NEGATIVE_THRESHOLD)
        assert not math.isfinite(h.threshold)


class TestBestResponse:
    def test_agent_below_threshold_moves_onto_it(self):
        # c=2: an agent at projection 0.3 moves 0.2 along the normal and wins
        obs = best_response(np.array([0.3, 0.4]), Hypothesis(normal=E1, threshold=0.5), 2.0)
        assert obs.manipulated
        assert np.allclose(obs.x, [0.5, 0.4], atol=1e-12)
        assert abs(utility(obs.x, np.array([0.3, 0.4]), E1, 2.0) - 0.6) < 1e-9

    def test_negative_agent_stays(self):
        z = np.array([-0.1, 0.2])
        obs = best_response(z, Hypothesis(normal=E1, threshold=0.5), 2.0)
        assert not obs.manipulated
        assert np.array_equal(obs.x, z)
        assert float(E1 @ obs.x) < 0.5

    def test_already_positive_agent_stays(self):
        z = np.array([0.7, 0.1])
        obs = best_response(z, Hypothesis(normal=E1, threshold=0.5), 2.0)
        assert not obs.manipulated
        assert np.array_equal(obs.x, z)

    def test_manipulated_lands_on_threshold_plane(self, rng):
        for _ in range(50):
            d = int(rng.integers(2, 8))
            v = sample_unit_sphere(d, rng)
            c = float(rng.uniform(0.6, 5.0))
            z = sample_unit_ball_batch(d, 1, rng)[0]
            obs = best_response(z, Hypothesis(normal=v, threshold=1.0 / c), c)
            if obs.manipulated:
                assert abs(float(v @ obs.x) - 1.0 / c) <= 1e-12
                move = obs.x - z
                coeff = float(move @ v)
                assert coeff >= 0.0
                assert np.allclose(move, coeff * v, atol=1e-12)
            else:
                assert np.array_equal(obs.x, z)

    def test_cost_at_most_one_allowed(self):
        # c <= 1 raises the threshold above the ball; the case split still applies
        obs = best_response(np.array([0.2, 0.1]), Hypothesis(normal=E1, threshold=1.25), 0.8)
        assert obs.manipulated
        assert abs(float(E1 @ obs.x) - 1.25) <= 1e-12
        assert np.linalg.norm(obs.x) > 1.0  # reports may leave the unit ball

    def test_invalid_cost(self):
        with pytest.raises(InvalidCostError):
            best_response(np.array([0.1, 0.1]), Hypothesis(normal=E1, threshold=0.5), -1.0)

    def test_brute_force_utility_oracle(self):
        # independent oracle: the closed form beats a random grid of candidate
        # reports (plus the projection point) up to 1e-9
        rng = make_rng(501)
        for _ in range(100):
            d = int(rng.integers(2, 7))
            v = sample_unit_sphere(d, rng)
            c = float(rng.uniform(1.1, 5.0))
            z = sample_unit_ball_batch(d, 1, rng)[0]
            obs = best_response(z, Hypothesis(normal=v, threshold=1.0 / c), c)
            got = utility(obs.x, z, v, c)
            cands = z + sample_unit_ball_batch(d, 2000, rng) / c
            values = (cands @ v >= 1.0 / c).astype(float)
            utils = values - c * np.linalg.norm(cands - z, axis=1)
            proj = z + (1.0 / c - float(v @ z)) * v
            best = max(float(utils.max()), utility(proj, z, v, c), utility(z, z, v, c))
            assert got >= best - 1e-9


class TestLabel:
    def test_realizable_sign_rule(self):
        cfg = EnvConfig(d=2, u=Hypothesis(normal=E1, threshold=0.0), c=2.0, seed=0)
        assert label(np.array([0.2, 0.1]), cfg, make_rng(0)) == 1
        assert label(np.array([-0.2, 0.1]), cfg, make_rng(0)) == -1
        # sign(0) := +1
        assert label(np.array([0.0, 0.3]), cfg, make_rng(0)) == 1

    def test_random_flip_zero_matches_realizable(self):
        u = sample_unit_sphere(3, make_rng(1))
        clean = EnvConfig(d=3, u=Hypothesis(normal=u, threshold=0.0), c=2.0,
                          noise=realizable_noise(), seed=0)
        flip0 = EnvConfig(d=3, u=Hypothesis(normal=u, threshold=0.0), c=2.0,
                          noise=random_flip_noise(0.0), seed=0)
        Z = sample_unit_ball_batch(3, 10_000, make_rng(2))
        assert np.array_equal(label_batch(Z, clean, make_rng(3)), label_batch(Z, flip0, make_rng(3)))

    def test_random_flip_rate(self):
        n = 100_000
        u = sample_unit_sphere(4, make_rng(4))
        cfg = EnvConfig(d=4, u=Hypothesis(normal=u, threshold=0.0), c=2.0,
                        noise=random_flip_noise(0.1), seed=0)
        Z = sample_unit_ball_batch(4, n, make_rng(5))
        Y = label_batch(Z, cfg, make_rng(6))
        clean = np.where(Z @ u >= 0.0, 1, -1)
        rate = float(np.mean(Y != clean))
        sigma = math.sqrt(0.1 * 0.9 / n)
        assert abs(rate - 0.1) <= 3 * sigma

    def test_boundary_band_flip_deterministic_mass(self):
        d, nu = 3, 0.05
        u = sample_unit_sphere(d, make_rng(7))
        noise = boundary_band_noise(nu, d)
        cfg = EnvConfig(d=d, u=Hypothesis(normal=u, threshold=0.0), c=2.0, noise=noise, seed=0)
        n = 1_000_000
        Z = sample_unit_ball_batch(d, n, make_rng(8))
        Y = label_batch(Z, cfg, make_rng(9))
        clean = np.where(Z @ u >= 0.0, 1, -1)
        flipped = Y != clean
        assert np.array_equal(flipped, np.abs(Z @ u) <= noise.band_radius)
        sigma = math.sqrt(nu * (1 - nu) / n)
        assert abs(float(np.mean(flipped)) - nu) <= 3 * sigma


class TestCalibrateBandRadius:
    def test_zero_noise_zero_radius(self):
        assert calibrate_band_radius(0.0, 5) == 0.0

    def test_monotone_in_nu(self):
        rs = [calibrate_band_radius(nu, 4) for nu in (0.01, 0.05, 0.1, 0.3)]
        assert all(a < b for a, b in zip(rs, rs[1:]))

    def test_inverts_the_margin_mass(self):
        for d, nu in ((3, 0.05), (6, 0.2)):
            r = calibrate_band_radius(nu, d)
            assert abs(ball_margin_mass(r, d) - nu) <= 1e-6

    def test_rejects_out_of_range(self):
        with pytest.raises(PreconditionViolatedError):
            calibrate_band_radius(0.6, 3)


class TestDrawExample:
    def test_constant_negative_rule_never_manipulates(self):
        cfg = realizable_env(3, seed=21)
        deployed = Hypothesis(normal=cfg.u.normal, threshold=PREDICT_NEGATIVE_THRESHOLD)
        batch = draw_batch(cfg, deployed, 5000, make_rng(21))
        assert not batch.manipulated.any()
        assert np.array_equal(batch.X, batch.Z)

    def test_negatives_are_bit_identical(self):
        cfg = realizable_env(4, seed=22)
        v = sample_unit_sphere(4, make_rng(23))
        deployed = Hypothesis(normal=v, threshold=1.0 / cfg.c)
        batch = draw_batch(cfg, deployed, 20_000, make_rng(22))
        neg = batch.X @ v < deployed.threshold
        assert np.array_equal(batch.X[neg], batch.Z[neg])
        assert not batch.manipulated[neg].any()

    def test_manipulated_land_on_threshold(self):
        cfg = realizable_env(4, seed=24)
        v = sample_unit_sphere(4, make_rng(25))
        deployed = Hypothesis(normal=v, threshold=1.0 / cfg.c)
        batch = draw_batch(cfg, deployed, 20_000, make_rng(24))
        moved = batch.manipulated
        assert moved.any()
        assert np.all(np.abs(batch.X[moved] @ v - deployed.threshold) <= 1e-12)

    def test_scalar_draw_matches_batch_of_one(self):
        cfg = realizable_env(3, seed=26)
        deployed = Hypothesis(normal=cfg.u.normal, threshold=1.0 / cfg.c)
        src, obs = draw_example(cfg, deployed, make_rng(26))
        batch = draw_batch(cfg, deployed, 1, make_rng(26))
        assert np.array_equal(src.z, batch.Z[0])
        assert src.y == batch.Y[0]
        assert np.array_equal(obs.x, batch.X[0])

    def test_truthful_config_never_manipulates(self):
        cfg = truthful_config(realizable_env(3, seed=27))
        assert cfg.c == math.inf
        deployed = Hypothesis(normal=cfg.u.normal, threshold=1.0 / cfg.c)
        assert deployed.threshold == 0.0
        batch = draw_batch(cfg, deployed, 5000, make_rng(27))
        assert not batch.manipulated.any()
        assert np.array_equal(batch.X, batch.Z)


class TestInvariants:
    def test_prediction_equivalence(self):
        # strategic rule at threshold 1/c vs sign(v . z): exact agreement
        rng = make_rng(28)
        total = 0
        for d in (2, 5, 9):
            v = sample_unit_sphere(d, rng)
            c = float(rng.uniform(0.5, 5.0))
            cfg = EnvConfig(d=d, u=Hypothesis(normal=v, threshold=0.0), c=c, seed=0)
            batch = draw_batch(cfg, Hypothesis(normal=v, threshold=1.0 / c), 30_000, rng)
            strategic = batch.X @ v >= 1.0 / c
            truthful = batch.Z @ v >= 0.0
            assert np.array_equal(strategic, truthful)
            total += len(batch)
        assert total >= 90_000

    def test_conditional_uniformity_in_band(self):
        # negatives restricted to a sub-band match direct conditioned draws
        rng = make_rng(29)
        d = 4
        cfg = realizable_env(d, seed=29)
        v = sample_unit_sphere(d, rng)
        b = 0.5 / math.sqrt(d)
        deployed = Hypothesis(normal=v, threshold=1.0 / cfg.c)
        kept = []
        while sum(map(len, kept)) < 10_000:
            batch = draw_batch(cfg, deployed, 200_000, rng)
            proj = (batch.X @ v) / np.linalg.norm(batch.X, axis=1)
            mask = (batch.X @ v < deployed.threshold) & (proj >= -b) & (proj <= -b / 2)
            kept.append(batch.X[mask])
        observed = np.concatenate(kept)[:10_000]
        direct = []
        while sum(map(len, direct)) < 10_000:
            Z = sample_unit_ball_batch(d, 200_000, rng)
            proj = (Z @ v) / np.linalg.norm(Z, axis=1)
            direct.append(Z[(proj >= -b) & (proj <= -b / 2)])
        direct = np.concatenate(direct)[:10_000]
        r = sample_unit_sphere(d, rng)
        assert stats.ks_2samp(observed @ v, direct @ v).pvalue >= 0.01
        assert stats.ks_2samp(observed @ r, direct @ r).pvalue >= 0.01
        assert stats.ks_2samp(
            np.linalg.norm(observed, axis=1), np.linalg.norm(direct, axis=1)
        ).pvalue >= 0.01

    def test_noise_budget(self):
        n = 100_000
        d = 4
        u = sample_unit_sphere(d, make_rng(30))
        for noise, nu in ((random_flip_noise(0.08), 0.08), (boundary_band_noise(0.04, d), 0.04)):
            cfg = EnvConfig(d=d, u=Hypothesis(normal=u, threshold=0.0), c=2.0, noise=noise, seed=0)
            Z = sample_unit_ball_batch(d, n, make_rng(31))
            Y = label_batch(Z, cfg, make_rng(32))
            rate = float(np.mean(Y != np.where(Z @ u >= 0.0, 1, -1)))
            assert rate <= nu + 3 * math.sqrt(nu * (1 - nu) / n)


def test_env_config_validation():
    with pytest.raises(InvalidCostError):
        EnvConfig(d=3, u=Hypothesis(normal=np.array([1.0, 0, 0]), threshold=0.0), c=0.0)
    with pytest.raises(PreconditionViolatedError):
        EnvConfig(d=1, u=Hypothesis(normal=np.array([1.0]), threshold=0.0), c=1.0)
    with pytest.raises(PreconditionViolatedError):
        # ground truth must be homogeneous
        EnvConfig(d=2, u=Hypothesis(normal=E1, threshold=0.5), c=1.0)


def test_draw_trace_writer_schema():
    buf = io.StringIO()
    writer = DrawTraceWriter(buf, d=2)
    writer.record(np.array([0.1, 0.2]), np.array([0.1, 0.2]), 1, False, -1)
    writer.record_batch(
        np.array([[0.3, 0.4]]), np.array([[0.5, 0.4]]), np.array([1]),
        np.array([True]), np.array([1]),
    )
    lines = buf.getvalue().strip().split("\n")
    assert lines[0] == "t,z0,z1,x0,x1,y,manipulated,predicted"
    assert lines[1].startswith("0,0.1,0.2,0.1,0.2,1,0,-1")
    assert lines[2].startswith("1,0.3,0.4,0.5,0.4,1,1,1")
