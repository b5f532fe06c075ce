"""Experiment configuration: TOML-style files, validation, noise-regime check."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from .environment import NOISE_KINDS, REALIZABLE
from .errors import InvalidConfigError
from .learner import DEFAULT_C_B, DEFAULT_C_M, LOG_FORM_LEMMA, LOG_FORM_THEOREM

SCHEMA_VERSION = 1

LEARNERS = ("active-strategic", "passive-strategic", "nonstrategic-active")
INITS = ("given-v0", "master-init")


@dataclass
class ExperimentConfig:
    """One experiment: a fixed parameter cell plus the seeds to run it on.

    Sweeps reuse the same record; ``grid_*`` lists expand into the cross
    product of cells, with the scalar fields as the fallback for axes that are
    not swept.
    """

    schema_version: int = SCHEMA_VERSION
    d: int = 5
    epsilon: float = 0.05
    delta: float = 0.1
    nu: float = 0.0
    noise_kind: str = REALIZABLE
    cost: float = 2.0
    C_m: float = DEFAULT_C_M
    C_b: float = DEFAULT_C_B
    band_log_form: str = LOG_FORM_THEOREM
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2])
    learner: str = "active-strategic"
    init: str = "given-v0"
    v0: list[float] | None = None
    draw_cap: float = 100.0
    mc_samples: int = 0
    max_rounds: int = 200_000
    check_every: int = 200
    theorem_regime: bool = True
    regime_constant: float = 0.125
    out_dir: str | None = None
    trace_draws: bool = False
    grid_d: list[int] | None = None
    grid_epsilon: list[float] | None = None
    grid_nu: list[float] | None = None
    grid_learner: list[str] | None = None

    def validate(self) -> list[str]:
        """Return warnings; raise InvalidConfigError on hard violations."""
        problems = []
        if self.schema_version != SCHEMA_VERSION:
            problems.append(f"schema_version: expected {SCHEMA_VERSION}, got {self.schema_version}")
        if self.d < 2:
            problems.append(f"d: must be >= 2, got {self.d}")
        if not 0.0 < self.epsilon <= 0.5:
            problems.append(f"epsilon: must be in (0, 1/2], got {self.epsilon}")
        if not 0.0 < self.delta < 1.0:
            problems.append(f"delta: must be in (0, 1), got {self.delta}")
        if self.noise_kind not in NOISE_KINDS:
            problems.append(f"noise_kind: must be one of {NOISE_KINDS}, got {self.noise_kind!r}")
        if not 0.0 <= self.nu <= 1.0:
            problems.append(f"nu: must be in [0, 1], got {self.nu}")
        if self.noise_kind == "boundary-band-flip" and not self.nu < 0.5:
            problems.append(f"nu: boundary-band-flip needs nu < 0.5, got {self.nu}")
        if not self.cost > 0.0:
            problems.append(f"cost: must be positive, got {self.cost}")
        if self.C_m <= 0.0 or self.C_b <= 0.0:
            problems.append(f"C_m/C_b: must be positive, got {self.C_m}/{self.C_b}")
        if self.band_log_form not in (LOG_FORM_THEOREM, LOG_FORM_LEMMA):
            problems.append(f"band_log_form: must be 'theorem' or 'lemma', got {self.band_log_form!r}")
        if self.learner not in LEARNERS:
            problems.append(f"learner: must be one of {LEARNERS}, got {self.learner!r}")
        if self.init not in INITS:
            problems.append(f"init: must be one of {INITS}, got {self.init!r}")
        if not self.seeds or any(not isinstance(s, int) or s < 0 for s in self.seeds):
            problems.append(f"seeds: need a nonempty list of nonnegative integers, got {self.seeds}")
        if len(set(self.seeds)) != len(self.seeds):
            problems.append("seeds: duplicate seeds would overwrite each other's artifacts")
        if self.v0 is not None and len(self.v0) != self.d:
            problems.append(f"v0: length {len(self.v0)} does not match d = {self.d}")
        if self.draw_cap <= 0.0:
            problems.append(f"draw_cap: must be positive, got {self.draw_cap}")
        if self.mc_samples < 0:
            problems.append(f"mc_samples: must be nonnegative, got {self.mc_samples}")
        if self.mc_samples and self.mc_samples < 1000:
            problems.append(f"mc_samples: must be 0 (off) or >= 1000, got {self.mc_samples}")
        if self.max_rounds < 0 or self.check_every < 1:
            problems.append("max_rounds must be >= 0 and check_every >= 1")
        for name in ("grid_d", "grid_epsilon", "grid_nu", "grid_learner"):
            vals = getattr(self, name)
            if vals is not None and len(vals) == 0:
                problems.append(f"{name}: empty grid axis")
        if problems:
            raise InvalidConfigError(problems)

        warnings = []
        for nu, learner in self._regime_cells():
            bound = nu_max(self.epsilon, self.d, self.delta, self.regime_constant)
            if learner == "active-strategic" and self.theorem_regime and nu > bound:
                warnings.append(
                    f"nu = {nu:g} exceeds the theorem-regime bound nu_max = {bound:.3g} "
                    f"(epsilon = {self.epsilon:g}, d = {self.d}, delta = {self.delta:g}); "
                    "guarantees are not expected to hold"
                )
        return warnings

    def _regime_cells(self):
        nus = self.grid_nu if self.grid_nu is not None else [self.nu]
        learners = self.grid_learner if self.grid_learner is not None else [self.learner]
        return [(nu, lr) for nu in nus for lr in learners]

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def nu_max(epsilon: float, d: int, delta: float, constant: float = 0.125) -> float:
    """Largest noise rate inside the guarantee regime (up to the configured constant)."""
    denom = math.log(d) + math.log(math.log(1.0 / epsilon)) + math.log(1.0 / delta)
    return constant * epsilon / denom


def load_config(path) -> ExperimentConfig:
    """Parse a key/value (TOML) experiment file into a validated-shape config.

    Unknown keys are rejected outright; value validation happens separately in
    :meth:`ExperimentConfig.validate` so callers can distinguish parse errors
    from semantic ones.
    """
    with open(path, "rb") as fh:
        try:
            raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise InvalidConfigError([f"config parse error: {exc}"]) from exc
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise InvalidConfigError([f"unknown config key {k!r}" for k in unknown])
    coerced = {}
    for key, value in raw.items():
        if key in ("epsilon", "delta", "nu", "cost", "C_m", "C_b", "draw_cap", "regime_constant"):
            value = float(value)
        if key in ("grid_epsilon", "grid_nu") and value is not None:
            value = [float(v) for v in value]
        coerced[key] = value
    try:
        return ExperimentConfig(**coerced)
    except TypeError as exc:
        raise InvalidConfigError([f"config field error: {exc}"]) from exc
