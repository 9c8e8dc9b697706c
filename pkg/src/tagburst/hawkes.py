"""Univariate self-exciting point process with exponential decay.

The conditional intensity is

    lam(t) = mu + beta * sum_{t_i < t} exp(-omega * (t - t_i))

with baseline rate mu, excitation jump beta, and decay rate omega, all per
day.  Each event raises the intensity by beta and the boost fades at rate
omega, so one event spawns beta/omega expected offspring (the branching
ratio); beta/omega >= 1 means the cascade is explosive.

The log-likelihood over [0, T] is computed in O(n) via the standard decay
recursion A_i = exp(-omega * (t_i - t_{i-1})) * (A_{i-1} + 1):

    ll = sum_i ln(mu + beta * A_i) - mu*T - (beta/omega) * sum_i (1 - exp(-omega*(T - t_i)))

Simultaneous timestamps are treated as ordered: the earlier-indexed event
excites the later one at full weight, never the reverse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from ._optim import maximize

__all__ = [
    "HawkesParams",
    "FitResult",
    "make_fit_result",
    "fit_result_to_dict",
    "intensity_at",
    "log_likelihood",
    "log_likelihood_gradient",
    "compensator",
    "fit_mle",
    "rescaled_residuals",
]

BETA_FLOOR = 1e-12  # fitted beta is floored here instead of touching zero
_POISSON_BETA_RATIO = 1e-6  # beta below this fraction of mu is effectively Poisson


@dataclass(frozen=True)
class HawkesParams:
    mu: float
    beta: float
    omega: float

    def __post_init__(self):
        if not (math.isfinite(self.mu) and self.mu > 0):
            raise ValueError(f"mu must be positive and finite, got {self.mu}")
        if not (math.isfinite(self.beta) and self.beta >= 0):
            raise ValueError(f"beta must be >= 0 and finite, got {self.beta}")
        if not (math.isfinite(self.omega) and self.omega > 0):
            raise ValueError(f"omega must be positive and finite, got {self.omega}")

    @property
    def branching_ratio(self) -> float:
        return self.beta / self.omega


@dataclass(frozen=True)
class FitResult:
    """Fitted model summary; aic is always exactly 2*n_params - 2*log_likelihood."""

    model: str
    params: dict
    log_likelihood: float
    n_params: int
    aic: float
    converged: bool
    n_iterations: int
    branching_ratio: float | None = None
    warnings: tuple[str, ...] = ()


def make_fit_result(model: str, params: Mapping[str, object], log_likelihood: float,
                    n_params: int, converged: bool, n_iterations: int,
                    branching_ratio: float | None = None,
                    warnings: Sequence[str] = ()) -> FitResult:
    return FitResult(model=model, params=dict(params),
                     log_likelihood=float(log_likelihood), n_params=int(n_params),
                     aic=2.0 * n_params - 2.0 * float(log_likelihood),
                     converged=bool(converged), n_iterations=int(n_iterations),
                     branching_ratio=branching_ratio, warnings=tuple(warnings))


def fit_result_to_dict(fit: FitResult) -> dict:
    """Flatten a FitResult for JSON export."""
    out: dict = {"model": fit.model}
    out.update(fit.params)
    out["loglik"] = fit.log_likelihood
    out["aic"] = fit.aic
    out["n_params"] = fit.n_params
    out["converged"] = fit.converged
    out["n_iter"] = fit.n_iterations
    if fit.branching_ratio is not None:
        out["branching_ratio"] = fit.branching_ratio
    if fit.warnings:
        out["warnings"] = list(fit.warnings)
    return out


def _check_times(times: Sequence[float], T: float) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if times.ndim != 1:
        raise ValueError("event times must be one-dimensional")
    if not math.isfinite(T) or T <= 0:
        raise ValueError(f"observation window T must be positive, got {T}")
    if times.size:
        if not np.all(np.isfinite(times)):
            raise ValueError("event times must be finite")
        if np.any(np.diff(times) < 0):
            raise ValueError("event times must be sorted ascending")
        if times[0] < 0 or times[-1] > T:
            raise ValueError(f"event times must lie within [0, {T}]")
    return times


def decay_sums(times: np.ndarray, omega: float) -> np.ndarray:
    """A_i = sum_{j<i} exp(-omega (t_i - t_j)) via the O(n) recursion."""
    n = times.size
    A = np.zeros(n)
    if n < 2:
        return A
    ts = times.tolist()
    a = 0.0
    for i in range(1, n):
        a = math.exp(-omega * (ts[i] - ts[i - 1])) * (a + 1.0)
        A[i] = a
    return A


def _decay_sums_with_grad(times: np.ndarray, omega: float) -> tuple[np.ndarray, np.ndarray]:
    """A_i as above plus B_i = sum_{j<i} (t_i-t_j) exp(-omega (t_i-t_j)) = -dA_i/domega."""
    n = times.size
    A = np.zeros(n)
    B = np.zeros(n)
    if n < 2:
        return A, B
    ts = times.tolist()
    a = b = 0.0
    for i in range(1, n):
        d = ts[i] - ts[i - 1]
        r = math.exp(-omega * d)
        b = r * (b + d * (a + 1.0))  # uses the previous a
        a = r * (a + 1.0)
        A[i] = a
        B[i] = b
    return A, B


def intensity_at(p: HawkesParams, history: Sequence[float], t: float) -> float:
    """Conditional intensity at t given past event times.

    History entries exactly at t count at full weight (ordered-tie rule);
    entries after t are an error.
    """
    history = np.asarray(history, dtype=float)
    if history.size and float(np.max(history)) > t:
        raise ValueError("t precedes part of the history")
    return float(p.mu + p.beta * np.sum(np.exp(-p.omega * (t - history))))


def compensator(p: HawkesParams, times: Sequence[float], t: float) -> float:
    """Integrated intensity Lambda(t) = mu*t + (beta/omega) * sum_{t_i<t} (1 - e^{-omega(t-t_i)})."""
    times = np.asarray(times, dtype=float)
    if times.size and np.any(np.diff(times) < 0):
        raise ValueError("event times must be sorted ascending")
    if not math.isfinite(t) or t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    past = times[times < t]
    # -expm1 keeps 1 - e^{-x} accurate when omega*(t - t_i) underflows
    return float(p.mu * t + (p.beta / p.omega) * np.sum(-np.expm1(-p.omega * (t - past))))


def log_likelihood(p: HawkesParams, times: Sequence[float], T: float) -> float:
    """Exact log-likelihood of the event times over [0, T] in O(n)."""
    times = _check_times(times, T)
    lam = p.mu + p.beta * decay_sums(times, p.omega)
    return float(np.sum(np.log(lam)) - compensator(p, times, T))


def log_likelihood_gradient(p: HawkesParams, times: Sequence[float], T: float) -> np.ndarray:
    """Analytic gradient of the log-likelihood wrt (mu, beta, omega)."""
    times = _check_times(times, T)
    A, B = _decay_sums_with_grad(times, p.omega)
    lam = p.mu + p.beta * A
    inv = 1.0 / lam
    tail = T - times
    expd = np.exp(-p.omega * tail)
    s0 = float(np.sum(-np.expm1(-p.omega * tail)))
    s1 = float(np.sum(tail * expd))
    d_mu = float(np.sum(inv)) - T
    d_beta = float(np.sum(A * inv)) - s0 / p.omega
    d_omega = (-p.beta * float(np.sum(B * inv))
               + p.beta * s0 / p.omega ** 2
               - (p.beta / p.omega) * s1)
    return np.array([d_mu, d_beta, d_omega])


def _neg_ll_and_grad(x: np.ndarray, times: np.ndarray, T: float) -> tuple[float, np.ndarray]:
    mu, beta, omega = np.exp(x)
    A, B = _decay_sums_with_grad(times, omega)
    lam = mu + beta * A
    inv = 1.0 / lam
    tail = T - times
    expd = np.exp(-omega * tail)
    s0 = float(np.sum(-np.expm1(-omega * tail)))
    s1 = float(np.sum(tail * expd))
    ll = float(np.sum(np.log(lam))) - mu * T - (beta / omega) * s0
    d_mu = float(np.sum(inv)) - T
    d_beta = float(np.sum(A * inv)) - s0 / omega
    d_omega = -beta * float(np.sum(B * inv)) + beta * s0 / omega ** 2 - (beta / omega) * s1
    # chain rule onto log-parameters
    grad = np.array([d_mu * mu, d_beta * beta, d_omega * omega])
    return -ll, -grad


def fit_mle(times: Sequence[float], T: float, init: HawkesParams | None = None) -> FitResult:
    """Maximum-likelihood fit of (mu, beta, omega) on event times in [0, T].

    Ascends in log space with analytic gradients; a stalled line search falls
    back to simplex search.  Needs at least 5 events and a positive time span.
    """
    times = _check_times(times, T)
    n = times.size
    if n < 5:
        raise ValueError(f"fit is underdetermined with {n} events (need at least 5)")
    if times[-1] == times[0]:
        raise ValueError("degenerate stream: all event times identical")

    if init is None:
        mean_gap = (times[-1] - times[0]) / (n - 1)
        omega0 = 1.0 / mean_gap
        init = HawkesParams(mu=0.5 * n / T, beta=0.5 * omega0, omega=omega0)
    x0 = np.log([init.mu, max(init.beta, BETA_FLOOR), init.omega])
    bounds = [(-60.0, 60.0), (math.log(BETA_FLOOR), 60.0), (-60.0, 60.0)]

    x, ll, converged, n_iter = maximize(
        lambda v: _neg_ll_and_grad(v, times, T), x0, bounds=bounds)
    mu, beta, omega = np.exp(x)
    params = HawkesParams(mu=float(mu), beta=float(beta), omega=float(omega))

    warnings = []
    if params.branching_ratio >= 1.0:
        warnings.append("supercritical")
    if params.beta < _POISSON_BETA_RATIO * params.mu:
        warnings.append("effectively_poisson")
    return make_fit_result(
        "hawkes", {"mu": params.mu, "beta": params.beta, "omega": params.omega},
        ll, 3, converged, n_iter,
        branching_ratio=params.branching_ratio, warnings=warnings)


def rescaled_residuals(p: HawkesParams, times: Sequence[float]) -> np.ndarray:
    """Inter-event compensator increments Lambda(t_i) - Lambda(t_{i-1}).

    Under the true model these are i.i.d. unit-exponential (time-rescaling),
    which is the basis of the goodness-of-fit check.
    """
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        raise ValueError("residuals need at least one event")
    if np.any(np.diff(times) < 0):
        raise ValueError("event times must be sorted ascending")
    if times[0] < 0:
        raise ValueError("event times must be >= 0")
    A = decay_sums(times, p.omega)
    gaps = np.diff(np.concatenate([[0.0], times]))
    # sum of decay factors at the previous event, counting that event itself
    carry = np.concatenate([[0.0], A[:-1] + 1.0])
    return p.mu * gaps + (p.beta / p.omega) * -np.expm1(-p.omega * gaps) * carry
