"""Manufactured problems built from symbolic expressions in x, y, z."""

from __future__ import annotations

import numpy as np
import sympy as sp

from .solve import ManufacturedSolution, ProblemSpec

X, Y, Z = sp.symbols("x y z", real=True)
_COORDS = (X, Y, Z)


def _vectorize(expr):
    f = sp.lambdify(_COORDS, expr, "numpy")

    def call(pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        val = f(pts[:, 0], pts[:, 1], pts[:, 2])
        return np.broadcast_to(np.asarray(val, dtype=float), (len(pts),)).copy()

    return call


def _vectorize_grad(exprs):
    fs = [_vectorize(e) for e in exprs]
    return lambda pts: np.column_stack([f(pts) for f in fs])


def scalar_function(text: str):
    """Vectorized callable on (m, 3) points from an expression string."""
    return _vectorize(sp.sympify(text, locals={"x": X, "y": Y, "z": Z}))


def manufactured(u, K=None, beta=None, name: str = "manufactured") -> ProblemSpec:
    """Problem whose exact solution is the expression ``u``.

    ``K`` must be a constant symmetric 3x3 matrix and ``beta`` a constant
    vector; the source is ``-div(K grad u) + beta . grad u`` and the
    Dirichlet data is ``u`` itself.
    """
    if isinstance(u, str):
        u = sp.sympify(u, locals={"x": X, "y": Y, "z": Z})
    Kmat = np.eye(3) if K is None else np.asarray(K, dtype=float).reshape(3, 3)
    bvec = np.zeros(3) if beta is None else np.asarray(beta, dtype=float).reshape(3)
    grad = [sp.diff(u, v) for v in _COORDS]
    Ks = sp.Matrix(3, 3, [sp.nsimplify(k) if float(k).is_integer() else sp.Float(k)
                          for k in Kmat.ravel()])
    flux = Ks * sp.Matrix(grad)
    g = -sum(sp.diff(flux[i], _COORDS[i]) for i in range(3))
    g += sum(sp.Float(bvec[i]) * grad[i] for i in range(3) if bvec[i] != 0.0)
    g = sp.simplify(g)
    return ProblemSpec(
        K=Kmat,
        beta=None if not bvec.any() else bvec,
        g=_vectorize(g),
        dirichlet=_vectorize(u),
        exact=ManufacturedSolution(_vectorize(u), _vectorize_grad(grad)),
        name=name,
    )


PATCH_U = "1 + 2*x - y + 3*z"
TRIG_U = "sin(pi*x)*sin(pi*y)*sin(pi*z)"


def patch_problem(K=None, beta=None) -> ProblemSpec:
    """Linear solution ``1 + 2x - y + 3z``; every low-order method is exact."""
    return manufactured(PATCH_U, K, beta, name="patch")


def trig_problem(K=None, beta=None) -> ProblemSpec:
    """``sin(pi x) sin(pi y) sin(pi z)``, vanishing on the boundary."""
    return manufactured(TRIG_U, K, beta, name="trig")


def trig_advection_problem(K=None, beta=None) -> ProblemSpec:
    """Trigonometric solution with the default advection field ``(1, 2, 0)``."""
    return manufactured(TRIG_U, K, (1.0, 2.0, 0.0) if beta is None else beta,
                        name="trig-advect")


PROBLEMS = {
    "patch": patch_problem,
    "trig": trig_problem,
    "trig-advect": trig_advection_problem,
}


def get_problem(name: str, K=None, beta=None) -> ProblemSpec:
    try:
        factory = PROBLEMS[name]
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None
    return factory(K, beta)
