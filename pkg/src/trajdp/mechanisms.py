"""Laplace noise, frequency perturbation and privacy-budget accounting.

All mechanisms accept an optional ``noise`` iterable of pre-drawn noise
values which replaces sampling; tests use it to replay exact traces.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

MODES = ("pureG", "pureL", "GL")


class ConfigurationError(ValueError):
    """Invalid mode, budget or parameter."""


@dataclass(frozen=True)
class LaplaceParams:
    mu: float
    scale: float

    def __post_init__(self):
        if not self.scale > 0:
            raise ConfigurationError(f"Laplace scale must be > 0, got {self.scale}")


@dataclass(frozen=True)
class PrivacyBudget:
    eps_global: float
    eps_local: float

    @property
    def total(self):
        return self.eps_global + self.eps_local

    def as_dict(self):
        return {"eps_global": self.eps_global, "eps_local": self.eps_local, "total": self.total}


def laplace_from_uniform(u, mu, scale):
    """Inverse CDF of Laplace(mu, scale) at u in (0, 1)."""
    d = u - 0.5
    return mu - scale * math.copysign(1.0, d) * math.log(1.0 - 2.0 * abs(d)) if d != 0 else mu


def _uniform(rng):
    u = rng.random()
    while u == 0.0:
        u = rng.random()
    return u


def sample_laplace(params: LaplaceParams, rng, size=None):
    """One draw (or ``size`` draws) by inverse-CDF transform of open-interval uniforms."""
    if size is None:
        return laplace_from_uniform(_uniform(rng), params.mu, params.scale)
    u = rng.random(size)
    zero = u == 0.0
    while zero.any():
        u[zero] = rng.random(int(zero.sum()))
        zero = u == 0.0
    d = u - 0.5
    return params.mu - params.scale * np.sign(d) * np.log(1.0 - 2.0 * np.abs(d))


def round_half_away(x):
    """Nearest integer, halves rounded away from zero."""
    if isinstance(x, np.ndarray):
        return (np.sign(x) * np.floor(np.abs(x) + 0.5)).astype(np.int64)
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def _eps_check(eps, name):
    if eps is None or not (isinstance(eps, (int, float)) and math.isfinite(eps)) or eps <= 0:
        raise ConfigurationError(f"{name} must be a finite number > 0, got {eps!r}")


@dataclass
class PerturbedTF:
    keys: np.ndarray  # candidate points, ascending
    original: np.ndarray
    perturbed: np.ndarray
    noise: np.ndarray

    def as_dict(self):
        return dict(zip(self.keys.tolist(), self.perturbed.tolist()))


def perturb_tf(keys, tf_values, eps_global, n_trajectories, rng=None,
               noise: Iterable[float] | None = None):
    """Noisy trajectory frequencies, rounded and clamped to [0, n_trajectories].

    One independent Laplace(0, 1/eps_global) draw per key, in key order.
    """
    _eps_check(eps_global, "eps_global")
    keys = np.asarray(keys, dtype=np.int64)
    l = np.asarray(tf_values, dtype=np.int64)
    order = np.argsort(keys, kind="stable")
    keys, l = keys[order], l[order]
    n = keys.size
    if noise is not None:
        eta = np.fromiter(noise, dtype=np.float64, count=n)
    else:
        params = LaplaceParams(0.0, 1.0 / eps_global)
        eta = np.array([sample_laplace(params, rng) for _ in range(n)], dtype=np.float64)
    out = np.clip(round_half_away(l + eta), 0, n_trajectories)
    return PerturbedTF(keys, l, out.astype(np.int64), eta)


@dataclass
class PerturbedPF:
    trajectory_id: int
    keys: np.ndarray  # aligned with the point list
    original: np.ndarray
    perturbed: np.ndarray
    noise: np.ndarray
    stage1: int  # number of leading entries in the first stage
    mean_stage1_noise: float

    @property
    def entries(self):
        return list(zip(self.keys.tolist(), self.original.tolist(), self.perturbed.tolist()))


def perturb_pf(point_list, pf_values, m, eps_local, rng=None,
               noise: Iterable[float] | None = None, trajectory_id=0):
    """Two-stage noisy point frequencies for one trajectory's point list.

    The first ``min(m, len)`` entries get Laplace noise centred at ``-f``.
    The remaining entries get noise centred at minus the mean realised
    first-stage change, which puts back roughly what the first stage removed.
    """
    _eps_check(eps_local, "eps_local")
    if m < 1:
        raise ConfigurationError("m must be >= 1")
    keys = np.asarray(point_list, dtype=np.int64)
    f = np.asarray(pf_values, dtype=np.int64)
    n = keys.size
    k1 = min(m, n)
    scale = 1.0 / eps_local
    src = iter(noise) if noise is not None else None
    out = np.empty(n, dtype=np.int64)
    eta = np.empty(n, dtype=np.float64)
    acc = 0
    for i in range(k1):
        fi = int(f[i])
        e = next(src) if src is not None else sample_laplace(LaplaceParams(-fi, scale), rng)
        eta[i] = e
        out[i] = max(round_half_away(fi + e), 0)
        acc += int(out[i]) - fi
    mu_bar = acc / k1 if k1 else 0.0
    for i in range(k1, n):
        fi = int(f[i])
        e = next(src) if src is not None else sample_laplace(LaplaceParams(-mu_bar, scale), rng)
        eta[i] = e
        out[i] = max(round_half_away(fi + e), 0)
    return PerturbedPF(trajectory_id, keys, f.copy(), out, eta, k1, mu_bar)


def budget_report(mode, epsilon=None, eps_global=None, eps_local=None):
    """Budget actually spent by ``mode``.

    pureG spends only the global share, pureL only the local share. GL
    splits ``epsilon`` evenly unless both shares are given explicitly.
    """
    if mode not in MODES:
        raise ConfigurationError(f"mode must be one of {MODES}, got {mode!r}")
    if mode == "pureG":
        eg = eps_global if eps_global is not None else epsilon
        _eps_check(eg, "eps_global")
        return PrivacyBudget(float(eg), 0.0)
    if mode == "pureL":
        el = eps_local if eps_local is not None else epsilon
        _eps_check(el, "eps_local")
        return PrivacyBudget(0.0, float(el))
    if eps_global is not None and eps_local is not None:
        _eps_check(eps_global, "eps_global")
        _eps_check(eps_local, "eps_local")
        if epsilon is not None and not math.isclose(eps_global + eps_local, epsilon):
            raise ConfigurationError("eps_global + eps_local must equal epsilon")
        return PrivacyBudget(float(eps_global), float(eps_local))
    if epsilon is None:
        if eps_global is not None or eps_local is not None:
            raise ConfigurationError("GL needs epsilon or both eps_global and eps_local")
        raise ConfigurationError("GL needs a privacy budget")
    _eps_check(epsilon, "epsilon")
    if eps_global is not None:
        _eps_check(eps_global, "eps_global")
        if eps_global >= epsilon:
            raise ConfigurationError("eps_global must be below epsilon")
        return PrivacyBudget(float(eps_global), float(epsilon - eps_global))
    if eps_local is not None:
        _eps_check(eps_local, "eps_local")
        if eps_local >= epsilon:
            raise ConfigurationError("eps_local must be below epsilon")
        return PrivacyBudget(float(epsilon - eps_local), float(eps_local))
    return PrivacyBudget(epsilon / 2.0, epsilon / 2.0)
