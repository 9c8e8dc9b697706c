"""Shared likelihood maximizer: quasi-Newton ascent with a simplex fallback.

Parameters live in log space so positivity is structural.  Convergence means
the gradient sup-norm fell below GRAD_TOL or the final step below STEP_TOL
within MAX_ITER iterations; when the quasi-Newton pass stalls we restart
from its best point with derivative-free Nelder-Mead.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize

GRAD_TOL = 1e-6
STEP_TOL = 1e-9
MAX_ITER = 500


def maximize(neg_and_grad: Callable[[np.ndarray], tuple[float, np.ndarray]],
             x0: Sequence[float],
             bounds: Sequence[tuple[float, float]] | None = None,
             ) -> tuple[np.ndarray, float, bool, int]:
    """Maximize the objective whose negative (value, gradient) is supplied.

    Returns (argmax, max value, converged flag, total iterations).
    """
    x0 = np.asarray(x0, dtype=float)
    trace: list[np.ndarray] = [x0.copy()]
    res = minimize(neg_and_grad, x0, jac=True, method="L-BFGS-B", bounds=bounds,
                   callback=lambda xk: trace.append(np.array(xk)),
                   options={"maxiter": MAX_ITER, "ftol": 1e-12, "gtol": GRAD_TOL})
    x, best, n_iter = np.asarray(res.x), float(res.fun), int(res.nit)
    gnorm = float(np.max(np.abs(res.jac)))
    step = float(np.max(np.abs(trace[-1] - trace[-2]))) if len(trace) >= 2 else np.inf
    converged = gnorm < GRAD_TOL or step < STEP_TOL

    if not converged:
        res2 = minimize(lambda v: neg_and_grad(v)[0], x, method="Nelder-Mead",
                        bounds=bounds,
                        options={"maxiter": MAX_ITER, "xatol": 1e-10, "fatol": 1e-12})
        n_iter += int(res2.nit)
        if res2.fun <= best:
            x, best = np.asarray(res2.x), float(res2.fun)
            gnorm = float(np.max(np.abs(neg_and_grad(x)[1])))
            converged = gnorm < GRAD_TOL or bool(res2.success)

    return x, -best, bool(converged), n_iter
