"""Small dense BFGS with a strong-Wolfe line search.

Sized for the 3-parameter pose problem: per-call overhead matters more
than asymptotics, so everything is plain numpy on tiny arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_EPS = np.finfo(float).eps

@dataclass
class BFGSResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    iterations: int
    evaluations: int
    converged: bool
    trace: list[float] = field(default_factory=list)


def _cubic_min(a, fa, ga, b, fb, gb):
    # minimizer of the cubic interpolating (a, fa, ga), (b, fb, gb); None if not usable
    d1 = ga + gb - 3.0 * (fa - fb) / (a - b)
    disc = d1 * d1 - ga * gb
    if disc < 0:
        return None
    d2 = np.sign(b - a) * np.sqrt(disc)
    denom = gb - ga + 2.0 * d2
    if denom == 0:
        return None
    return b - (b - a) * (gb + d2 - d1) / denom


def wolfe_line_search(phi, f0: float, g0: float, alpha0: float = 1.0, c1: float = 1e-4, c2: float = 0.9,
                      max_evals: int = 20):
    """Return ``(alpha, f, grad_vec, evals)`` satisfying the strong Wolfe conditions, or None.

    ``phi(alpha)`` returns ``(f, slope, grad_vec)`` along the search direction.
    """
    evals = 0
    a_prev, f_prev, g_prev = 0.0, f0, g0
    alpha = alpha0

    def zoom(lo, flo, glo, hi, fhi, ghi):
        nonlocal evals
        while evals < max_evals:
            a = _cubic_min(lo, flo, glo, hi, fhi, ghi)
            span = abs(hi - lo)
            if a is None or not (min(lo, hi) + 0.1 * span <= a <= max(lo, hi) - 0.1 * span):
                a = 0.5 * (lo + hi)
            fa, ga, gv = phi(a)
            evals += 1
            if fa > f0 + c1 * a * g0 or fa >= flo:
                hi, fhi, ghi = a, fa, ga
            else:
                if abs(ga) <= -c2 * g0:
                    return a, fa, gv
                if ga * (hi - lo) >= 0:
                    hi, fhi, ghi = lo, flo, glo
                lo, flo, glo = a, fa, ga
            if abs(hi - lo) < 1e-14:
                break
        return None

    while evals < max_evals:
        fa, ga, gv = phi(alpha)
        evals += 1
        if fa > f0 + c1 * alpha * g0 or (evals > 1 and fa >= f_prev):
            out = zoom(a_prev, f_prev, g_prev, alpha, fa, ga)
            return (*out, evals) if out else None
        if abs(ga) <= -c2 * g0:
            return alpha, fa, gv, evals
        if ga >= 0:
            out = zoom(alpha, fa, ga, a_prev, f_prev, g_prev)
            return (*out, evals) if out else None
        a_prev, f_prev, g_prev = alpha, fa, ga
        alpha *= 2.0
    return None


def bfgs(fun_grad, x0, inv_hessian0=None, max_iter: int = 50, gtol: float = 1e-8,
         xtol: float = 1e-12) -> BFGSResult:
    """Minimize ``fun_grad(x) -> (f, g)`` from ``x0``.

    Stops when ``max|g| < gtol``, when a step no longer moves ``x`` by more
    than ``xtol`` (relative) while leaving ``f`` unchanged, when the line
    search fails or the descent slope is below rounding level, or after ``max_iter`` iterations.  ``trace``
    lists the cost at every accepted iterate, starting with ``x0``.
    """
    x = np.asarray(x0, dtype=float).copy()
    n = x.size
    eye = np.eye(n)
    H = eye.copy() if inv_hessian0 is None else np.array(inv_hessian0, dtype=float)
    f, g = fun_grad(x)
    evals = 1
    trace = [f]
    it = 0
    converged = np.abs(g).max() < gtol
    while not converged and it < max_iter:
        p = -H @ g
        slope = float(g @ p)
        if slope >= 0:
            H = eye.copy()
            p = -g
            slope = float(g @ p)
        if -slope <= _EPS * abs(f):
            # a unit step could not change f representably
            break

        def phi(a, p=p):
            fa, ga = fun_grad(x + a * p)
            return fa, float(ga @ p), ga

        found = wolfe_line_search(phi, f, slope)
        if found is None:
            break
        alpha, f_new, g_new, used = found
        evals += used
        s = alpha * p
        y = g_new - g
        x = x + s
        f, g = f_new, g_new
        trace.append(f)
        it += 1
        sy = float(s @ y)
        if sy > 1e-300:
            # expanded form of (I - rho s y') H (I - rho y s') + rho s s'
            Hy = H @ y
            H = H + ((sy + y @ Hy) / (sy * sy)) * np.outer(s, s) - (np.outer(Hy, s) + np.outer(s, Hy)) / sy
        converged = np.abs(g).max() < gtol
        if not converged and np.abs(s).max() <= xtol * (1.0 + np.abs(x).max()) and f >= trace[-2]:
            break
    return BFGSResult(x, float(f), g, it, evals, bool(converged), trace)
