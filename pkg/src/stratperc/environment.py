"""Strategic-agent simulator: best responses, noisy labels, example stream.

Agents observe the deployed halfspace and report the utility-maximizing
feature vector (value of a positive classification minus cost-per-unit-move
times the l2 distance moved).  The simulator keeps the true features and
labels private; learners only ever see the reported vectors and the answers
of a counting label oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidCostError, PreconditionViolatedError
from .geometry import Rng, ball_margin_mass, sample_unit_ball_batch

# Deployable rule that classifies everything negative (no agent can afford to
# reach an infinite threshold).  Used by the master-initialization collection
# phase.
PREDICT_NEGATIVE_THRESHOLD = math.inf

REALIZABLE = "realizable"
RANDOM_FLIP = "random-flip"
BOUNDARY_BAND_FLIP = "boundary-band-flip"

NOISE_KINDS = (REALIZABLE, RANDOM_FLIP, BOUNDARY_BAND_FLIP)


@dataclass(frozen=True)
class Hypothesis:
    """Halfspace rule: classify +1 iff normal . x >= threshold."""

    normal: np.ndarray
    threshold: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "normal", np.asarray(self.normal, dtype=float))
        n = float(np.linalg.norm(self.normal))
        if abs(n - 1.0) > 1e-9:
            raise PreconditionViolatedError(f"hypothesis normal must be unit length, |w| = {n!r}")
        if self.threshold < 0.0:
            raise PreconditionViolatedError("threshold must be nonnegative")


@dataclass(frozen=True)
class TrueExample:
    """Simulator-private ground truth: unmanipulated features and hidden label."""

    z: np.ndarray
    y: int


@dataclass(frozen=True)
class Observation:
    """What the learner sees, plus simulator-private diagnostics."""

    x: np.ndarray
    manipulated: bool
    source: TrueExample


@dataclass(frozen=True)
class NoiseModel:
    kind: str = REALIZABLE
    nu: float = 0.0
    band_radius: float = 0.0


def realizable_noise() -> NoiseModel:
    return NoiseModel(REALIZABLE, 0.0, 0.0)


def random_flip_noise(nu: float) -> NoiseModel:
    if not 0.0 <= nu <= 1.0:
        raise PreconditionViolatedError(f"flip probability must be in [0, 1], got {nu}")
    return NoiseModel(RANDOM_FLIP, float(nu), 0.0)


def boundary_band_noise(nu: float, d: int) -> NoiseModel:
    """Deterministic adversary: flip exactly the mass-nu slab around u's boundary."""
    return NoiseModel(BOUNDARY_BAND_FLIP, float(nu), calibrate_band_radius(nu, d))


@dataclass(frozen=True)
class EnvConfig:
    d: int
    u: Hypothesis
    c: float
    noise: NoiseModel = field(default_factory=realizable_noise)
    seed: int = 0

    def __post_init__(self):
        if self.d < 2:
            raise PreconditionViolatedError("d must be at least 2")
        if not self.c > 0.0:
            raise InvalidCostError(f"per-unit cost must be positive, got {self.c}")
        if self.u.threshold != 0.0:
            raise PreconditionViolatedError("ground-truth rule must be homogeneous (threshold 0)")


def truthful_config(cfg: EnvConfig) -> EnvConfig:
    """Same world, but agents can never afford to move (infinite unit cost)."""
    return replace(cfg, c=math.inf)


def calibrate_band_radius(nu: float, d: int) -> float:
    """Radius r with P[|u . Z| <= r] = nu (+/- 1e-6) under the uniform ball.

    Numeric inversion (bisection) of the one-coordinate ball-marginal CDF.
    """
    if not 0.0 <= nu < 0.5:
        raise PreconditionViolatedError(f"nu must be in [0, 0.5), got {nu}")
    if nu == 0.0:
        return 0.0
    lo, hi = 0.0, 1.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if ball_margin_mass(mid, d) < nu:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def best_response(z, deployed: Hypothesis, c: float) -> Observation:
    """Utility-maximizing report of an agent with true features ``z``.

    Movement is only ever parallel to the deployed normal, and only when a
    positive classification is reachable at cost below its unit value:
    below the boundary the agent stays (negative), inside [0, threshold) it
    moves exactly onto the threshold plane, at or above it stays (positive).
    """
    z = np.asarray(z, dtype=float)
    obs = _best_response_batch(z[None, :], deployed, c)
    src = TrueExample(z=z, y=0)  # label attached by draw_example
    return Observation(x=obs[0][0], manipulated=bool(obs[1][0]), source=src)


def _best_response_batch(Z: np.ndarray, deployed: Hypothesis, c: float):
    if not c > 0.0:
        raise InvalidCostError(f"per-unit cost must be positive, got {c}")
    t = deployed.threshold
    if not math.isfinite(t):
        return Z, np.zeros(len(Z), dtype=bool)
    p = Z @ deployed.normal
    move = (p >= 0.0) & (p < t)
    X = Z.copy()
    if move.any():
        # pad the landing point by 1e-13 (well inside the +/-1e-12 landing
        # tolerance): dot-product roundoff would otherwise leave ~half the
        # movers one ulp below the threshold and classified negative
        pad = 1e-13 * max(1.0, t)
        X[move] += (t - p[move] + pad)[:, None] * deployed.normal
    return X, move


def label(z, cfg: EnvConfig, rng: Rng) -> int:
    """Hidden true label of ``z`` under the configured noise model."""
    z = np.asarray(z, dtype=float)
    return int(label_batch(z[None, :], cfg, rng)[0])


def label_batch(Z: np.ndarray, cfg: EnvConfig, rng: Rng) -> np.ndarray:
    clean = np.where(Z @ cfg.u.normal >= 0.0, 1, -1)
    noise = cfg.noise
    if noise.kind == REALIZABLE:
        return clean
    if noise.kind == RANDOM_FLIP:
        # one uniform per example even at nu = 0, so the stream shape does not
        # depend on the noise level
        flips = rng.random(len(Z)) < noise.nu
        return np.where(flips, -clean, clean)
    if noise.kind == BOUNDARY_BAND_FLIP:
        flips = np.abs(Z @ cfg.u.normal) <= noise.band_radius
        return np.where(flips, -clean, clean)
    raise PreconditionViolatedError(f"unknown noise kind {noise.kind!r}")


@dataclass(frozen=True)
class DrawBatch:
    """Vectorized slice of the example stream (simulator-private fields included)."""

    Z: np.ndarray
    Y: np.ndarray
    X: np.ndarray
    manipulated: np.ndarray

    def __len__(self) -> int:
        return len(self.Z)

    def example(self, i: int) -> tuple[TrueExample, Observation]:
        src = TrueExample(z=self.Z[i], y=int(self.Y[i]))
        return src, Observation(x=self.X[i], manipulated=bool(self.manipulated[i]), source=src)


def draw_batch(cfg: EnvConfig, deployed: Hypothesis, n: int, rng: Rng) -> DrawBatch:
    """n fresh agents: uniform-ball truths, noisy labels, best responses."""
    Z = sample_unit_ball_batch(cfg.d, n, rng)
    Y = label_batch(Z, cfg, rng)
    X, manipulated = _best_response_batch(Z, deployed, cfg.c)
    return DrawBatch(Z=Z, Y=Y, X=X, manipulated=manipulated)


def draw_example(cfg: EnvConfig, deployed: Hypothesis, rng: Rng) -> tuple[TrueExample, Observation]:
    """One fresh agent; the TrueExample half is simulator-private."""
    return draw_batch(cfg, deployed, 1, rng).example(0)


class DrawTraceWriter:
    """Optional per-draw diagnostic CSV: t, z[0..d), x[0..d), y, manipulated, predicted."""

    def __init__(self, stream, d: int):
        self._stream = stream
        self._t = 0
        cols = ["t"] + [f"z{i}" for i in range(d)] + [f"x{i}" for i in range(d)]
        cols += ["y", "manipulated", "predicted"]
        stream.write(",".join(cols) + "\n")

    def record(self, z, x, y: int, manipulated: bool, predicted: int) -> None:
        row = [str(self._t)]
        row += [repr(float(v)) for v in z]
        row += [repr(float(v)) for v in x]
        row += [str(int(y)), str(int(manipulated)), str(int(predicted))]
        self._stream.write(",".join(row) + "\n")
        self._t += 1

    def record_batch(self, Z, X, Y, manipulated, predicted) -> None:
        for i in range(len(Z)):
            self.record(Z[i], X[i], int(Y[i]), bool(manipulated[i]), int(predicted[i]))
