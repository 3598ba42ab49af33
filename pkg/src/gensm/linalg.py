"""Small batched linear-algebra helpers for Hermitian positive definite matrices."""
import numpy as np

from .errors import NumericalFailure


def cholesky_hpd(A: np.ndarray) -> np.ndarray:
    """Batched lower Cholesky factor; raises NumericalFailure if not HPD."""
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"matrix is not Hermitian positive definite: {exc}") from exc
    # LAPACK lets NaN input through without complaint
    if not np.all(np.isfinite(np.diagonal(L, axis1=-2, axis2=-1))):
        raise NumericalFailure("Cholesky factor is not finite")
    return L


def logdet_from_cholesky(L: np.ndarray) -> np.ndarray:
    d = np.diagonal(L, axis1=-2, axis2=-1).real
    return 2.0 * np.sum(np.log(d), axis=-1)


def logdet_hpd(A: np.ndarray) -> np.ndarray:
    """Natural log-determinant of (a stack of) HPD matrices."""
    return logdet_from_cholesky(cholesky_hpd(A))


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    z = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


def logsumexp(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """Max-shifted ``log(sum(exp(x)))`` along ``axis``."""
    mx = np.max(x, axis=axis, keepdims=True)
    return np.squeeze(mx, axis=axis) + np.log(np.sum(np.exp(x - mx), axis=axis))
