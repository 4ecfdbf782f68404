"""Small dense complex-Hermitian kernel: Gram matrices, spectra, Cholesky.

Everything here works on T x T matrices; the receive dimension N only
enters through :func:`gram_normalized`.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "CholeskyError",
    "hermitize",
    "gram_normalized",
    "max_eigenvalue",
    "slightly_above",
    "shifted_matrix",
    "cholesky_psd",
    "frobenius_norm",
]

# relative/absolute margin used to place rho just above lambda_max
RHO_REL_MARGIN = 1e-9
RHO_ABS_MARGIN = 1e-12


class CholeskyError(np.linalg.LinAlgError):
    """Matrix is indefinite beyond what the jitter schedule can absorb."""


def hermitize(m) -> np.ndarray:
    """Return (m + m^H)/2 with an exactly real diagonal."""
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    h = 0.5 * (m + m.conj().T)
    idx = np.arange(h.shape[0])
    h[idx, idx] = h[idx, idx].real
    return h


def gram_normalized(x, n: int | None = None) -> np.ndarray:
    """Normalized Gram matrix X^H X / N of an N x T received block."""
    x = np.asarray(x, dtype=complex)
    if x.ndim != 2:
        raise ValueError(f"X must be 2-D (N x T), got shape {x.shape}")
    if n is None:
        n = x.shape[0]
    if n != x.shape[0]:
        raise ValueError(f"N={n} does not match X with {x.shape[0]} rows")
    if n < 1:
        raise ValueError("N must be >= 1")
    return hermitize(x.conj().T @ x / n)


def max_eigenvalue(h) -> float:
    """Largest eigenvalue of a Hermitian matrix."""
    h = np.asarray(h, dtype=complex)
    try:
        w = np.linalg.eigvalsh(h)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK non-convergence
        raise np.linalg.LinAlgError(f"eigensolver did not converge: {exc}") from exc
    return float(w[-1])


def slightly_above(lam_max: float) -> float:
    """The shift rho used for rho*I - Gram: lambda_max*(1+1e-9) + 1e-12."""
    return lam_max * (1.0 + RHO_REL_MARGIN) + RHO_ABS_MARGIN


def shifted_matrix(h, rho: float) -> np.ndarray:
    """rho*I - H, kept exactly Hermitian."""
    h = np.asarray(h, dtype=complex)
    return hermitize(rho * np.eye(h.shape[0]) - h)


def _factor(m: np.ndarray, clamp: float):
    """Row-oriented upper Cholesky with pivot clamping.

    Returns R, or None if some pivot is more negative than ``-clamp``.
    """
    t = m.shape[0]
    r = np.zeros_like(m)
    for i in range(t):
        col = r[:i, i]
        pivot = m[i, i].real - np.vdot(col, col).real
        if pivot < -clamp:
            return None
        if pivot < clamp:
            # zero pivot: 0/0 convention leaves the rest of the row at zero
            continue
        lii = np.sqrt(pivot)
        r[i, i] = lii
        if i + 1 < t:
            r[i, i + 1:] = (m[i, i + 1:] - r[:i, i].conj() @ r[:i, i + 1:]) / lii
    return r


def cholesky_psd(m, jitter: float | None = None, *, return_shift: bool = False):
    """Upper-triangular factor R with R^H R = M + delta*I for PSD ``M``.

    Pivots below ``jitter`` are clamped to zero (their row is left at zero),
    which reproduces exactly singular factors. If a pivot comes out more
    negative than ``-jitter``, the factorization is retried with
    delta = jitter, 10*jitter, ... up to 1e-6*trace(M).

    Parameters
    ----------
    m : array_like
        (T, T) Hermitian positive semidefinite matrix.
    jitter : float, optional
        Clamp threshold and first diagonal shift. Defaults to
        ``1e-10 * max(|diag(M)|, 1e-300)``.
    return_shift : bool
        Also return the delta that was applied.

    Returns
    -------
    R : np.ndarray
        (T, T) upper triangular with a real, nonnegative diagonal.
    delta : float
        Only when ``return_shift`` is set.

    Raises
    ------
    CholeskyError
        If no shift up to the cap makes all pivots nonnegative.
    """
    m = hermitize(m)
    diag = np.abs(m.diagonal().real)
    scale = float(diag.max()) if diag.size else 0.0
    if jitter is None:
        jitter = 1e-10 * max(scale, 1e-300)
    cap = 1e-6 * max(float(m.diagonal().real.sum()), scale, jitter)

    delta = 0.0
    eye = np.eye(m.shape[0])
    while True:
        r = _factor(m + delta * eye if delta else m, jitter)
        if r is not None:
            return (r, delta) if return_shift else r
        delta = jitter if delta == 0.0 else 10.0 * delta
        if delta > cap:
            raise CholeskyError(
                f"matrix is indefinite beyond the jitter cap ({cap:.3g})"
            )


def frobenius_norm(m) -> float:
    m = np.asarray(m)
    return float(np.sqrt(np.sum(np.abs(m) ** 2)))
