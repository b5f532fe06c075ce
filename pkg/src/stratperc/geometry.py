"""Vector primitives, unit-ball/sphere sampling, and band geometry.

Every random routine takes an explicit ``numpy.random.Generator``; streams are
derived from a base seed with :func:`make_rng` so that independent tasks never
share generator state.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import InvalidBandError, ZeroVectorError

Rng = np.random.Generator

_ZERO_NORM = 1e-300


def make_rng(seed: int, stream: int = 0) -> Rng:
    """Independent PCG64 stream number ``stream`` derived from ``seed``.

    The same (seed, stream) pair always yields a bit-identical draw sequence.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream),))
    return np.random.Generator(np.random.PCG64(ss))


def normalize(x) -> np.ndarray:
    """Scale ``x`` to unit length, preserving direction."""
    x = np.asarray(x, dtype=float)
    n = float(np.linalg.norm(x))
    if n < _ZERO_NORM:
        raise ZeroVectorError("cannot normalize a zero vector")
    return x / n


def angle(w1, w2) -> float:
    """Angle in [0, pi] between two nonzero vectors."""
    a = normalize(w1)
    b = normalize(w2)
    # clamp guards arccos against |dot| = 1 + eps at near-parallel vectors
    return float(math.acos(min(1.0, max(-1.0, float(a @ b)))))


def sample_unit_sphere(d: int, rng: Rng) -> np.ndarray:
    """One point uniform on the unit sphere in R^d."""
    return sample_unit_sphere_batch(d, 1, rng)[0]


def sample_unit_ball(d: int, rng: Rng) -> np.ndarray:
    """One point uniform in the closed unit ball in R^d."""
    return sample_unit_ball_batch(d, 1, rng)[0]


def sample_unit_sphere_batch(d: int, n: int, rng: Rng) -> np.ndarray:
    """(n, d) array of i.i.d. uniform sphere points (normalized Gaussians)."""
    g = rng.standard_normal((n, d))
    norms = np.maximum(np.linalg.norm(g, axis=1), _ZERO_NORM)
    return g / norms[:, None]


def sample_unit_ball_batch(d: int, n: int, rng: Rng) -> np.ndarray:
    """(n, d) array of i.i.d. uniform ball points.

    Direction times radius: radius is U^(1/d) so that P[|Z| <= r] = r^d.
    Rejection from the cube is avoided; its acceptance rate decays
    exponentially with d.
    """
    dirs = sample_unit_sphere_batch(d, n, rng)
    radii = rng.random(n) ** (1.0 / d)
    return dirs * radii[:, None]


def _log_beta(a: float, b: float) -> float:
    return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)


def _adaptive_simpson(f, a: float, b: float, tol: float) -> float:
    """Classic adaptive Simpson quadrature with absolute tolerance ``tol``."""

    def simpson(lo, hi, flo, fmid, fhi):
        return (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi)

    def recurse(lo, hi, flo, fmid, fhi, whole, eps, depth):
        mid = 0.5 * (lo + hi)
        lmid = 0.5 * (lo + mid)
        rmid = 0.5 * (mid + hi)
        fl = f(lmid)
        fr = f(rmid)
        left = simpson(lo, mid, flo, fl, fmid)
        right = simpson(mid, hi, fmid, fr, fhi)
        if depth <= 0 or abs(left + right - whole) <= 15.0 * eps:
            return left + right + (left + right - whole) / 15.0
        return recurse(lo, mid, flo, fl, fmid, left, 0.5 * eps, depth - 1) + recurse(
            mid, hi, fmid, fr, fhi, right, 0.5 * eps, depth - 1
        )

    if a == b:
        return 0.0
    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    whole = simpson(a, b, fa, fm, fb)
    return recurse(a, b, fa, fm, fb, whole, tol, 48)


def sphere_marginal_pdf(t, d: int):
    """Density of one coordinate of a uniform unit-sphere point in R^d.

    f(t) = (1 - t^2)^((d-3)/2) / B(1/2, (d-1)/2) on [-1, 1].
    """
    t = np.asarray(t, dtype=float)
    c = math.exp(-_log_beta(0.5, (d - 1) / 2.0))
    out = np.zeros_like(t)
    inside = np.abs(t) < 1.0
    out[inside] = c * (1.0 - t[inside] ** 2) ** ((d - 3) / 2.0)
    return out


def band_fraction(b: float, d: int) -> float:
    """P[-b <= W . x_hat <= -b/2] for x uniform in the ball, W any unit vector.

    The direction x_hat of a uniform ball point is uniform on the sphere, so
    this is the sphere-marginal mass of [b/2, b] (by symmetry).  Computed with
    adaptive Simpson after substituting t = sin(phi), which removes the
    integrable endpoint singularity at |t| = 1 for d = 2.
    """
    if not (0.0 < b <= 1.0):
        raise InvalidBandError(f"band width must be in (0, 1], got {b}")
    lo = math.asin(b / 2.0)
    hi = math.asin(b)
    c = math.exp(-_log_beta(0.5, (d - 1) / 2.0))
    integral = _adaptive_simpson(lambda p: math.cos(p) ** (d - 2), lo, hi, 1e-10)
    return c * integral


def ball_margin_mass(r: float, d: int) -> float:
    """P[|u . Z| <= r] for Z uniform in the unit ball, u any unit vector."""
    if r <= 0.0:
        return 0.0
    r = min(r, 1.0)
    # one-coordinate marginal of the ball: (1 - t^2)^((d-1)/2) * V_{d-1}/V_d
    c = math.exp(math.lgamma(d / 2.0 + 1.0) - math.lgamma((d + 1) / 2.0)) / math.sqrt(math.pi)
    integral = _adaptive_simpson(lambda p: math.cos(p) ** d, 0.0, math.asin(r), 1e-10)
    return 2.0 * c * integral


def sample_sphere_in_band(w, b: float, n: int, rng: Rng, max_draws: int | None = None) -> np.ndarray:
    """(n, d) uniform sphere points conditioned on -b <= w.x <= -b/2.

    Plain rejection in vectorized chunks; raises after ``max_draws`` proposals
    (default 200/band_fraction per requested point).
    """
    w = normalize(w)
    d = w.shape[0]
    if max_draws is None:
        max_draws = int(math.ceil(200.0 * n / band_fraction(b, d)))
    return _rejection_sample(
        lambda m: sample_unit_sphere_batch(d, m, rng),
        lambda pts: _in_band_mask(pts @ w, np.ones(len(pts)), b),
        n,
        max_draws,
    )


def sample_ball_in_band(w, b: float, n: int, rng: Rng, max_draws: int | None = None) -> np.ndarray:
    """(n, d) uniform ball points z conditioned on -b <= w.normalize(z) <= -b/2."""
    w = normalize(w)
    d = w.shape[0]
    if max_draws is None:
        max_draws = int(math.ceil(200.0 * n / band_fraction(b, d)))

    def accept(pts):
        norms = np.maximum(np.linalg.norm(pts, axis=1), _ZERO_NORM)
        return _in_band_mask(pts @ w, norms, b)

    return _rejection_sample(lambda m: sample_unit_ball_batch(d, m, rng), accept, n, max_draws)


def _in_band_mask(proj: np.ndarray, norms: np.ndarray, b: float) -> np.ndarray:
    scaled = proj / norms
    return (scaled >= -b) & (scaled <= -b / 2.0)


def _rejection_sample(draw, accept, n: int, max_draws: int) -> np.ndarray:
    from .errors import DrawBudgetExceededError

    kept = []
    total = 0
    got = 0
    chunk = max(1024, 4 * n)
    while got < n:
        m = min(chunk, max_draws - total)
        if m <= 0:
            raise DrawBudgetExceededError(
                f"band rejection sampling used {total} draws for {got}/{n} accepted points",
                context={"draws": total, "accepted": got, "needed": n},
            )
        pts = draw(m)
        total += m
        mask = accept(pts)
        if mask.any():
            kept.append(pts[mask])
            got += int(mask.sum())
    return np.concatenate(kept, axis=0)[:n]
