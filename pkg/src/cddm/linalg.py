"""Dense least-squares kernels.

``pinv`` and ``lstsq`` are SVD based. :class:`IncrementalLS` keeps a thin QR
factorization of a growing column set so that the residual of a tentative
extra column is available in O(N * cols) and can be cheaply undone.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_triangular

__all__ = ["default_tol", "pinv", "lstsq", "IncrementalLS", "Candidate", "HandleConsumedError"]

EPS = np.finfo(np.float64).eps


def default_tol(shape) -> float:
    """Relative singular-value cutoff ``max(rows, cols) * eps``."""
    return max(shape) * EPS


def _as_finite_matrix(M) -> np.ndarray:
    M = np.asarray(M, dtype=np.float64)
    if M.ndim == 1:
        M = M[:, None]
    if M.ndim != 2:
        raise ValueError("expected a 2-D matrix")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    return M


def _svd_inverse_parts(M, tol):
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    if tol is None:
        tol = default_tol(M.shape)
    cutoff = tol * (s[0] if s.size else 0.0)
    keep = s > cutoff
    return U[:, keep], s[keep], Vt[keep]


def pinv(M, tol: float | None = None) -> np.ndarray:
    """Moore-Penrose pseudoinverse.

    Singular values at or below ``tol * s_max`` are treated as zero; ``tol``
    defaults to :func:`default_tol`.
    """
    M = _as_finite_matrix(M)
    if M.size == 0 or not np.any(M):
        return np.zeros(M.shape[::-1])
    U, s, Vt = _svd_inverse_parts(M, tol)
    return (Vt.T / s) @ U.T


def lstsq(M, y, tol: float | None = None) -> np.ndarray:
    """Minimum-norm least-squares solution of ``M @ beta ~= y``."""
    M = _as_finite_matrix(M)
    y = np.asarray(y, dtype=np.float64)
    if y.shape[0] != M.shape[0]:
        raise ValueError(f"rows of M ({M.shape[0]}) != length of y ({y.shape[0]})")
    if not np.all(np.isfinite(y)):
        raise ValueError("right-hand side has non-finite entries")
    if M.size == 0 or not np.any(M):
        return np.zeros((M.shape[1],) + y.shape[1:])
    U, s, Vt = _svd_inverse_parts(M, tol)
    return Vt.T @ ((U.T @ y) / (s if y.ndim == 1 else s[:, None]))


class HandleConsumedError(RuntimeError):
    """A candidate was committed/discarded twice, or a stale one was used."""


class Candidate:
    """A tentatively appended column; see :meth:`IncrementalLS.append`."""

    __slots__ = ("_owner", "_q", "_r", "_rho", "_col", "_resid", "_exact_norm", "_svd",
                 "residual_norm", "independent", "_done")

    def __init__(self, owner, col, r, q, rho, resid, exact_norm, residual_norm, independent, svd=None):
        self._owner = owner
        self._col = col
        self._r = r
        self._q = q
        self._rho = rho
        self._resid = resid
        self._exact_norm = exact_norm
        self._svd = svd
        self.residual_norm = residual_norm
        self.independent = independent
        self._done = False

    @property
    def rmse(self) -> float:
        return self.residual_norm / np.sqrt(self._owner.n_rows)

    @property
    def beta(self) -> np.ndarray:
        """Output weights if this column were committed."""
        return self._owner._solve(extra=self)

    def commit(self) -> None:
        self._owner._commit(self)

    def discard(self) -> None:
        self._owner._discard(self)


def _truncated_parts(R, c, tol):
    """SVD pieces of the minimum-norm solve ``R beta ~= c`` with the pseudoinverse cutoff.

    Returns ``(U, s, Vt, lost)`` restricted to kept singular values, where
    ``lost`` is the norm of the part of ``c`` outside the kept left subspace.
    """
    U, s, Vt = np.linalg.svd(R, full_matrices=False)
    keep = s > tol * (s[0] if s.size else 0.0)
    U, s, Vt = U[:, keep], s[keep], Vt[keep]
    lost = float(np.linalg.norm(c - U @ (U.T @ c)))
    return U, s, Vt, lost


class IncrementalLS:
    """Least squares ``H beta ~= y`` over a growing set of columns of ``H``.

    Columns are orthogonalized against the current basis by classical
    Gram-Schmidt with one re-orthogonalization pass. A column whose
    orthogonal remainder is below ``tol * scale`` (``scale`` the largest
    column norm, ``tol`` defaulting to ``max(rows, cols) * eps``) is stored
    but flagged dependent; it leaves the residual unchanged.

    With ``truncate`` the reported residual and weights follow the
    pseudoinverse exactly: singular values of ``H`` at or below
    ``tol * s_max`` are dropped, as :func:`pinv` does. Because ``H = Q R``,
    those singular values are the ones of the small factor ``R``, so the
    extra cost per candidate is an SVD of a ``cols x cols`` matrix.

    Only one candidate may be pending at a time. Discarding it leaves the
    committed state untouched.
    """

    def __init__(self, y, capacity: int = 32, tol: float | None = None, truncate: bool = False):
        y = np.asarray(y, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(y)):
            raise ValueError("targets have non-finite entries")
        self._y = y
        self.tol = tol
        self.truncate = truncate
        N = y.shape[0]
        capacity = max(int(capacity), 1)
        self._H = np.empty((N, capacity))
        self._Q = np.empty((N, capacity))
        self._R = np.zeros((capacity, capacity))
        self._qty = np.zeros(capacity)
        self._indep = np.zeros(capacity, dtype=bool)
        self._resid = y.copy()
        self._exact_norm = float(np.linalg.norm(y))
        self._resid_norm = self._exact_norm
        self._svd = None
        self._scale = 0.0
        self._ncols = 0
        self._rank = 0
        self._pending: Candidate | None = None

    @property
    def n_rows(self) -> int:
        return self._y.shape[0]

    @property
    def n_cols(self) -> int:
        return self._ncols

    @property
    def rank(self) -> int:
        return self._rank

    @property
    def residual_norm(self) -> float:
        return self._resid_norm

    @property
    def rmse(self) -> float:
        return self._resid_norm / np.sqrt(self.n_rows)

    @property
    def H(self) -> np.ndarray:
        return self._H[:, : self._ncols]

    def _grow(self):
        cap = self._H.shape[1] * 2
        N = self.n_rows
        for name in ("_H", "_Q"):
            old = getattr(self, name)
            new = np.empty((N, cap))
            new[:, : old.shape[1]] = old
            setattr(self, name, new)
        R = np.zeros((cap, cap))
        R[: self._R.shape[0], : self._R.shape[1]] = self._R
        self._R = R
        self._qty = np.concatenate([self._qty, np.zeros(cap - self._qty.size)])
        self._indep = np.concatenate([self._indep, np.zeros(cap - self._indep.size, dtype=bool)])

    def _tol(self, cols: int) -> float:
        return self.tol if self.tol is not None else default_tol((self.n_rows, cols))

    def append(self, col) -> Candidate:
        """Tentatively add ``col``; returns a handle to query, commit or discard."""
        if self._pending is not None:
            raise HandleConsumedError("previous candidate is still pending")
        col = np.asarray(col, dtype=np.float64).reshape(-1)
        if col.shape[0] != self.n_rows:
            raise ValueError(f"column has length {col.shape[0]}, expected {self.n_rows}")
        if not np.all(np.isfinite(col)):
            raise ValueError("column has non-finite entries")
        k, j = self._rank, self._ncols
        Q = self._Q[:, :k]
        if k:
            r = Q.T @ col
            v = col - Q @ r
            r2 = Q.T @ v
            v -= Q @ r2
            r += r2
        else:
            r = np.zeros(0)
            v = col.copy()
        rho = float(np.linalg.norm(v))
        col_norm = float(np.linalg.norm(col))
        scale = max(self._scale, col_norm)
        tol = self._tol(j + 1)
        independent = rho > tol * scale and rho > 0.0
        if independent:
            q = v / rho
            qy = float(q @ self._y)
            gamma = float(q @ self._resid)
            resid = self._resid - gamma * q
            exact = float(np.linalg.norm(resid))
        else:
            q, resid, exact = None, self._resid, self._exact_norm
        reported, svd = exact, None
        if self.truncate:
            kk = k + independent
            R = np.zeros((kk, j + 1))
            R[:k, :j] = self._R[:k, :j]
            R[:k, j] = r
            c = self._qty[:k]
            if independent:
                R[k, j] = rho
                c = np.append(c, qy)
            if kk:
                svd = _truncated_parts(R, c, tol)
                reported = float(np.hypot(exact, svd[3]))
        cand = Candidate(self, col, r, q, rho, resid, exact, reported, independent, svd)
        self._pending = cand
        return cand

    def _check(self, cand):
        if cand._done or cand is not self._pending:
            raise HandleConsumedError("candidate already committed or discarded")

    def _commit(self, cand: Candidate) -> None:
        self._check(cand)
        if self._ncols == self._H.shape[1]:
            self._grow()
        j = self._ncols
        k = self._rank
        self._H[:, j] = cand._col
        # projection coefficients are kept for dependent columns too, so that
        # H ~= Q R holds column by column
        self._R[:k, j] = cand._r
        if cand.independent:
            self._Q[:, k] = cand._q
            self._R[k, j] = cand._rho
            self._qty[k] = float(cand._q @ self._y)
            self._rank += 1
        self._indep[j] = cand.independent
        self._resid = cand._resid
        self._exact_norm = cand._exact_norm
        self._resid_norm = cand.residual_norm
        self._svd = cand._svd
        self._scale = max(self._scale, float(np.linalg.norm(cand._col)))
        self._ncols += 1
        cand._done = True
        self._pending = None

    def _discard(self, cand: Candidate) -> None:
        self._check(cand)
        cand._done = True
        self._pending = None

    def _triangular_beta(self, extra: Candidate | None = None) -> np.ndarray:
        """Basic solution: weights of dependent columns set to zero."""
        ncols, k = self._ncols, self._rank
        idx = np.flatnonzero(self._indep[:ncols])
        R = self._R[:k][:, idx]
        qty = self._qty[:k]
        total = ncols
        if extra is not None:
            total += 1
            if extra.independent:
                R = np.block([[R, extra._r[:, None]], [np.zeros((1, k)), np.array([[extra._rho]])]])
                qty = np.append(qty, float(extra._q @ self._y))
                idx = np.append(idx, ncols)
        beta = np.zeros(total)
        if idx.size:
            beta[idx] = solve_triangular(R, qty, lower=False, check_finite=False)
        return beta

    def _solve(self, extra: Candidate | None = None) -> np.ndarray:
        if self.truncate:
            svd = self._svd if extra is None else extra._svd
            total = self._ncols + (extra is not None)
            if svd is None:
                return np.zeros(total)
            U, s, Vt, _ = svd
            c = self._qty[: self._rank]
            if extra is not None and extra.independent:
                c = np.append(c, float(extra._q @ self._y))
            return Vt.T @ ((U.T @ c) / s)
        full_rank = self._rank == self._ncols and (extra is None or extra.independent)
        if full_rank:
            return self._triangular_beta(extra)
        H = self.H if extra is None else np.column_stack([self.H, extra._col])
        return lstsq(H, self._y, self.tol)

    def beta(self) -> np.ndarray:
        """Minimum-norm output weights for the committed columns."""
        return self._solve()

    def basic_beta(self) -> np.ndarray:
        """Back-substitution weights; equals :meth:`beta` when columns are independent."""
        return self._triangular_beta()
