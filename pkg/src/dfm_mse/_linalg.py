"""Symmetric positive definite helpers.

Every inverse in the package goes through a Cholesky factorization; nothing
here calls a general LU solver.
"""

import numpy as np
from scipy import linalg

from .exceptions import NotPositiveDefinite, SingularNormalEquations

# reciprocal condition number below which an r x r normal matrix is singular
_RCOND_FLOOR = 1e-13


def symmetrize(a):
    return 0.5 * (a + a.T)


def cholesky(a, what="matrix"):
    """Lower Cholesky factor of ``a`` wrapped for :func:`scipy.linalg.cho_solve`."""
    try:
        return linalg.cho_factor(a, lower=True, check_finite=True)
    except linalg.LinAlgError as exc:
        raise NotPositiveDefinite(f"{what} is not positive definite") from exc


def spd_solve(a, b, what="matrix"):
    """Solve ``a x = b`` for symmetric positive definite ``a``."""
    return linalg.cho_solve(cholesky(a, what), b, check_finite=False)


def spd_inv(a, what="matrix"):
    return symmetrize(spd_solve(a, np.eye(a.shape[0]), what))


def normal_solve(a, b):
    """Solve with a small r x r normal-equations matrix.

    Raises
    ------
    SingularNormalEquations
        If ``a`` is not numerically positive definite.
    """
    eig = np.linalg.eigvalsh(symmetrize(a))
    if eig[0] <= _RCOND_FLOOR * max(eig[-1], np.finfo(float).tiny):
        raise SingularNormalEquations(
            f"normal equations are singular (eigenvalues {eig[0]:.3e} .. {eig[-1]:.3e})"
        )
    return linalg.cho_solve(linalg.cho_factor(a, lower=True), b)


def normal_inv(a):
    return symmetrize(normal_solve(a, np.eye(a.shape[0])))


def is_psd(a, rtol=1e-10):
    """Check ``min eig >= -rtol * trace`` on the symmetric part of ``a``."""
    s = symmetrize(a)
    scale = max(abs(np.trace(s)), np.finfo(float).tiny)
    return np.linalg.eigvalsh(s)[0] >= -rtol * scale


def loewner_leq(a, b, rtol=1e-10):
    """True when ``b - a`` is positive semidefinite (up to ``rtol``)."""
    d = symmetrize(b - a)
    scale = max(np.abs(a).max(), np.abs(b).max(), np.finfo(float).tiny)
    return np.linalg.eigvalsh(d)[0] >= -rtol * scale


def posterior(omega, pi):
    """``(Pi^{-1} + Omega)^{-1}`` as ``C (I + C' Omega C)^{-1} C'`` with ``Pi = C C'``.

    No subtraction is involved, so the result keeps full relative accuracy
    when ``Omega`` is large. ``Pi`` may be singular.
    """
    pi = symmetrize(pi)
    try:
        c = np.linalg.cholesky(pi)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(pi)
        c = v * np.sqrt(np.clip(w, 0.0, None))
    inner = np.eye(pi.shape[0]) + c.T @ omega @ c
    return symmetrize(c @ linalg.cho_solve(linalg.cho_factor(inner, lower=True), c.T))
