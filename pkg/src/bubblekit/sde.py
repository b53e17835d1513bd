"""Path simulation for the CIR yield and the alternative yield processes.

Every path owns an independent generator seeded with
``SeedSequence(seed, spawn_key=(path_index,))`` so a multi-path run gives the
same numbers whatever the chunking or thread count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ValidationError

PRICE_FLOOR = 1e-12


class Model(str, Enum):
    CIR = "cir"
    BM = "bm"
    GBM = "gbm"
    CKLS = "ckls"


class Scheme(str, Enum):
    EULER_FULL_TRUNCATION = "euler"
    EXACT_CIR = "exact"


PARAM_NAMES: dict[Model, tuple[str, ...]] = {
    Model.CIR: ("b", "alpha", "psi"),
    Model.BM: ("b", "psi"),
    Model.GBM: ("alpha", "psi"),
    Model.CKLS: ("b", "alpha", "psi", "v"),
}

CKLS_V_MAX = 1.5


def check_params(model: Model, params) -> tuple[float, ...]:
    model = Model(model)
    params = tuple(float(x) for x in params)
    names = PARAM_NAMES[model]
    if len(params) != len(names):
        raise ValidationError(f"{model.value} takes {len(names)} parameters {names}, got {len(params)}")
    if not all(math.isfinite(x) for x in params):
        raise ValidationError("parameters must be finite")
    values = dict(zip(names, params))
    if values["psi"] < 0:
        raise ValidationError("psi must be >= 0")
    if model is Model.CKLS and not 0 < values["v"] <= CKLS_V_MAX:
        raise ValidationError(f"CKLS elasticity must lie in (0, {CKLS_V_MAX}], got {values['v']}")
    return params


def drift(model: Model, params, x):
    """μ(θ', x) of each model."""
    if model is Model.CIR or model is Model.CKLS:
        return params[0] - params[1] * x
    if model is Model.BM:
        return params[0] + 0.0 * x
    return -params[0] * x


def diffusion(model: Model, params, x):
    """σ(θ'', x) of each model."""
    if model is Model.CIR:
        return params[2] * np.sqrt(x)
    if model is Model.CKLS:
        return params[2] * np.power(x, params[3])
    if model is Model.BM:
        return params[1] + 0.0 * x
    return params[1] * x


@dataclass(frozen=True, eq=False)
class SeriesSample:
    """Uniformly sampled path x_0..x_n with step ``dt`` starting at ``t0``."""

    values: np.ndarray
    dt: float
    t0: float = 0.0
    clamped: tuple[int, ...] = field(default=())

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 1 or values.size < 2:
            raise ValidationError("a series needs at least two points")
        if not np.all(np.isfinite(values)):
            raise ValidationError("series values must be finite")
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ValidationError(f"dt must be > 0, got {self.dt}")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.size

    @property
    def n(self) -> int:
        """Number of increments."""
        return self.values.size - 1

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.values.size)


@dataclass(frozen=True)
class SimSpec:
    model: Model
    params: tuple[float, ...]
    x0: float
    n_steps: int
    dt: float
    seed: int = 0
    scheme: Scheme = Scheme.EULER_FULL_TRUNCATION

    def __post_init__(self):
        object.__setattr__(self, "model", Model(self.model))
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        object.__setattr__(self, "params", check_params(self.model, self.params))
        if not (math.isfinite(self.x0) and self.x0 > 0):
            raise ValidationError(f"x0 must be > 0, got {self.x0}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValidationError(f"n_steps must be a positive integer, got {self.n_steps}")
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ValidationError(f"dt must be > 0, got {self.dt}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValidationError("seed must be a 64-bit unsigned integer")
        if self.scheme is Scheme.EXACT_CIR and self.model is not Model.CIR:
            raise ValidationError("the exact scheme is only available for the CIR model")
        if self.scheme is Scheme.EXACT_CIR and min(self.params[0], self.params[2]) <= 0:
            raise ValidationError("the exact scheme needs b > 0 and psi > 0")


def path_rng(seed: int, path_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(path_index),)))


def _euler_block(spec: SimSpec, indices: range) -> np.ndarray:
    n = spec.n_steps
    # draws are taken per path so results do not depend on the block layout
    z = np.empty((len(indices), n))
    for row, i in enumerate(indices):
        z[row] = path_rng(spec.seed, i).standard_normal(n)
    z *= math.sqrt(spec.dt)
    out = np.empty((len(indices), n + 1))
    out[:, 0] = spec.x0
    x = np.full(len(indices), float(spec.x0))
    truncate = spec.model is not Model.BM
    for k in range(n):
        xe = np.maximum(x, 0.0) if truncate else x
        x = x + drift(spec.model, spec.params, xe) * spec.dt + diffusion(spec.model, spec.params, xe) * z[:, k]
        out[:, k + 1] = np.maximum(x, 0.0) if truncate else x
    return out


def _exact_cir_path(spec: SimSpec, index: int) -> np.ndarray:
    b, alpha, psi = spec.params
    rng = path_rng(spec.seed, index)
    decay = math.exp(-alpha * spec.dt)
    cscale = 2.0 * alpha / (psi**2 * -math.expm1(-alpha * spec.dt))
    half_dof = 2.0 * b / psi**2
    out = np.empty(spec.n_steps + 1)
    out[0] = x = spec.x0
    for k in range(spec.n_steps):
        # noncentral chi-square as a Poisson mixture of gammas, scaled by 1/(2c)
        n_mix = rng.poisson(cscale * x * decay)
        x = rng.gamma(half_dof + n_mix) / cscale
        out[k + 1] = x
    return out


def _simulate_block(spec: SimSpec, indices: range) -> np.ndarray:
    if spec.scheme is Scheme.EXACT_CIR:
        return np.stack([_exact_cir_path(spec, i) for i in indices])
    return _euler_block(spec, indices)


def simulate_yield(spec: SimSpec, path_index: int = 0) -> SeriesSample:
    values = _simulate_block(spec, range(path_index, path_index + 1))[0]
    return SeriesSample(values, spec.dt)


def simulate_paths(spec: SimSpec, n_paths: int, max_workers: int = 1, chunk: int = 2048) -> np.ndarray:
    """Array of shape (n_paths, n_steps + 1); row i equals ``simulate_yield(spec, i)``."""
    if n_paths < 1:
        raise ValidationError("n_paths must be >= 1")
    # keep each block's normal draws around 16M doubles at most
    chunk = max(1, min(chunk, 16_000_000 // (spec.n_steps + 1)))
    blocks = [range(s, min(s + chunk, n_paths)) for s in range(0, n_paths, chunk)]
    if max_workers <= 1 or len(blocks) == 1:
        parts = [_simulate_block(spec, blk) for blk in blocks]
    else:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            parts = list(pool.map(lambda blk: _simulate_block(spec, blk), blocks))
    return np.concatenate(parts, axis=0)


def price_path(yield_path: SeriesSample, earnings: float) -> SeriesSample:
    """Pointwise P = E/γ; yields at or below the floor are clamped and their indices recorded."""
    if not earnings > 0:
        raise ValidationError("earnings must be > 0")
    g = yield_path.values
    low = g <= PRICE_FLOOR
    clamped = tuple(int(i) for i in np.flatnonzero(low))
    return SeriesSample(earnings / np.where(low, PRICE_FLOOR, g), yield_path.dt, yield_path.t0, clamped)
