"""Small dense complex linear algebra for 2-qubit work.

Matrices are plain ``numpy`` complex arrays. Everything here is written for
matrices of dimension 16 or less; nothing is tuned for large problems.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

HERMITIAN_TOL = 1e-9

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY2 = np.eye(2, dtype=complex)

# Order used for every coefficient vector in the package: (X, Y, Z, I).
PAULI_BASIS = np.stack([PAULI_X, PAULI_Y, PAULI_Z, IDENTITY2])


class NotHermitianError(ValueError):
    pass


def as_matrix(a) -> np.ndarray:
    m = np.asarray(a, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return m


def kron(a, b) -> np.ndarray:
    """Kronecker product; entry ``(i*db + k, j*db + l)`` is ``a[i, j] * b[k, l]``."""
    a = as_matrix(a)
    b = as_matrix(b)
    da, db = a.shape[0], b.shape[0]
    return (a[:, None, :, None] * b[None, :, None, :]).reshape(da * db, da * db)


def trace(a) -> complex:
    return complex(np.trace(as_matrix(a)))


def _check_dims(a: np.ndarray, dims: Sequence[int], site: int) -> None:
    if any(int(d) < 1 for d in dims):
        raise ValueError(f"subsystem dimensions must be positive, got {list(dims)}")
    if int(np.prod(dims)) != a.shape[0]:
        raise ValueError(f"dims {list(dims)} do not multiply to matrix dimension {a.shape[0]}")
    if not 0 <= site < len(dims):
        raise ValueError(f"site {site} out of range for {len(dims)} subsystems")


def partial_trace(a, dims: Sequence[int], site: int) -> np.ndarray:
    """Trace out tensor factor ``site`` of ``a`` (factors ordered as in ``kron``)."""
    a = as_matrix(a)
    _check_dims(a, dims, site)
    n = len(dims)
    t = a.reshape(tuple(dims) * 2)
    t = np.trace(t, axis1=site, axis2=n + site)
    d = a.shape[0] // dims[site]
    return t.reshape(d, d)


def partial_transpose(a, dims: Sequence[int] = (2, 2), site: int = 1) -> np.ndarray:
    a = as_matrix(a)
    _check_dims(a, dims, site)
    n = len(dims)
    t = a.reshape(tuple(dims) * 2)
    t = np.swapaxes(t, site, n + site)
    return t.reshape(a.shape)


def partial_transpose_batch(a: np.ndarray, site: int = 1) -> np.ndarray:
    """Partial transpose of a stack of 4x4 two-qubit matrices."""
    t = a.reshape(-1, 2, 2, 2, 2)
    t = np.swapaxes(t, 1 + site, 3 + site)
    return t.reshape(-1, 4, 4)


def hermiticity_error(a) -> float:
    a = np.asarray(a)
    return float(np.max(np.abs(a - np.swapaxes(a, -1, -2).conj()), initial=0.0))


def is_hermitian(a, tol: float = HERMITIAN_TOL) -> bool:
    return hermiticity_error(a) <= tol


def jacobi_eigenvalues(
    a: np.ndarray, tol: float = 1e-12, max_sweeps: int = 100
) -> np.ndarray:
    """Eigenvalues of a stack of Hermitian matrices by cyclic complex Jacobi rotations.

    ``a`` has shape ``(batch, n, n)``; the result has shape ``(batch, n)``,
    each row sorted ascending. A sweep visits every pair ``(p, q)`` once and
    the same rotation index sequence is applied to the whole stack, each
    matrix with its own angle. Iteration stops once the off-diagonal
    Frobenius norm of every matrix is below ``tol * max(1, ||a||_F)``.
    """
    a = np.array(a, dtype=complex, copy=True)
    if a.ndim != 3 or a.shape[1] != a.shape[2]:
        raise ValueError(f"expected a stack of square matrices, got shape {a.shape}")
    n = a.shape[1]
    scale = np.maximum(1.0, np.linalg.norm(a, axis=(1, 2)))
    pairs = [(p, q) for p in range(n - 1) for q in range(p + 1, n)]

    def off_norm(m):
        off = m - np.einsum("bii->bi", m)[:, :, None] * np.eye(n)
        return np.sqrt(np.sum(np.abs(off) ** 2, axis=(1, 2)))

    for _ in range(max_sweeps):
        if np.all(off_norm(a) < tol * scale):
            break
        for p, q in pairs:
            apq = a[:, p, q]
            mag = np.abs(apq)
            active = mag > 1e-300
            # phase so that the rotated (p, q) entry is real and non-negative
            phase = np.where(active, apq / np.where(active, mag, 1.0), 1.0)
            app = a[:, p, p].real
            aqq = a[:, q, q].real
            theta = (aqq - app) / (2.0 * np.where(active, mag, 1.0))
            t = np.sign(theta) / (np.abs(theta) + np.hypot(theta, 1.0))
            t = np.where(theta == 0.0, 1.0, t)
            t = np.where(active, t, 0.0)
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            # 2x2 block of the unitary acting on columns p, q
            u = np.empty((a.shape[0], 2, 2), dtype=complex)
            u[:, 0, 0] = c
            u[:, 0, 1] = s
            u[:, 1, 0] = -s * phase.conj()
            u[:, 1, 1] = c * phase.conj()
            idx = [p, q]
            a[:, :, idx] = a[:, :, idx] @ u
            a[:, idx, :] = np.swapaxes(u, 1, 2).conj() @ a[:, idx, :]
            a[:, p, q] = 0.0
            a[:, q, p] = 0.0
    else:
        if not np.all(off_norm(a) < tol * scale):
            raise RuntimeError(f"Jacobi iteration did not converge in {max_sweeps} sweeps")
    return np.sort(np.einsum("bii->bi", a).real, axis=1)


def hermitian_eigenvalues(a, tol: float = HERMITIAN_TOL) -> np.ndarray:
    """Ascending real eigenvalues of a Hermitian matrix.

    Raises ``NotHermitianError`` if ``max |a - a^H|`` exceeds ``tol``.
    """
    a = as_matrix(a)
    err = hermiticity_error(a)
    if err > tol:
        raise NotHermitianError(f"matrix is not Hermitian (max deviation {err:.3g})")
    a = 0.5 * (a + a.conj().T)
    return jacobi_eigenvalues(a[None])[0]


def random_hermitian(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Random Hermitian matrix.

    For ``dim == 2`` the four Pauli coefficients (X, Y, Z, I) are drawn
    i.i.d. uniform on [-1, 1]. Larger dimensions symmetrize a matrix whose
    real and imaginary parts are uniform on [-1, 1].
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if dim == 2:
        coeffs = rng.uniform(-1.0, 1.0, size=4)
        return np.einsum("a,aij->ij", coeffs, PAULI_BASIS)
    g = rng.uniform(-1.0, 1.0, size=(dim, dim)) + 1j * rng.uniform(-1.0, 1.0, size=(dim, dim))
    return 0.5 * (g + g.conj().T)
