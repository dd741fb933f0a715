"""Leave-one-subject-out selection for penalized linear smoothers.

Two tools live here. ``loso_shortcut_error`` is the exact
leave-one-subject-out squared prediction error of a ridge-type smoother,
computed from the full fit through the block identity
``y_i - yhat_i^{[i]} = (I - S_ii)^{-1} (y_i - S_i y)`` instead of n
refits. The ``GridSelector`` evaluates an approximate version of that
criterion over a whole grid of penalty weights at a cost that is almost
independent of the grid size: after one whitening of the design and one
eigendecomposition per penalty mixture, each candidate penalty level
costs a handful of vector operations.

The selector works for any design matrix X, response vector y, subject
row grouping and list of penalty matrices, so the covariance smoother
uses it both for its unconstrained blocks (two penalties mixed by a
weight) and for its symmetry-constrained blocks (a single penalty).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from ._linalg import sym_sqrt_pair

# Relative ridge added to X'X before whitening; far below statistical
# noise but keeps the inverse root finite for deficient sparse designs.
GRAM_RIDGE = 1e-10


def loso_shortcut_error(X, y, slices, A):
    """Exact leave-one-subject-out error of a penalized linear smoother.

    Parameters
    ----------
    X : ndarray, shape (N, q)
        Stacked design matrix.
    y : ndarray, shape (N,)
        Stacked responses.
    slices : sequence of (start, stop)
        Contiguous row ranges, one per subject.
    A : ndarray, shape (q, q)
        Normal matrix of the full fit, ``X'X + penalty``.

    Returns
    -------
    float
        ``sum_i || (I - S_ii)^{-1} (S_i y - y_i) ||^2`` where S is the
        smoother ``X A^{-1} X'``. Equal to the sum of squared prediction
        errors of n literal refits, each leaving one subject out.
    """
    cf = cho_factor(A)
    coef = cho_solve(cf, X.T @ y)
    total = 0.0
    for start, stop in slices:
        Xi = X[start:stop]
        if Xi.shape[0] == 0:
            continue
        yi = y[start:stop]
        Mi = cho_solve(cf, Xi.T)
        Sii = Xi @ Mi
        resid = Xi @ coef - yi
        e = np.linalg.solve(np.eye(Sii.shape[0]) - Sii, resid)
        total += float(e @ e)
    return total


@dataclass
class SelectionResult:
    """Outcome of a grid search.

    ``surface`` lists (rho, weight, score) in evaluation order; non-finite
    scores mark skipped grid points.
    """

    rho: float
    weight: float
    score: float
    surface: list


class GridSelector:
    """Fast approximate LOSO criterion on a (weight, rho) grid.

    The criterion for penalty ``rho * sum_j w_j P_j`` is
    ``||y - S y||^2 + 2 sum_i (S_i y - y_i)' S_ii (S_i y - y_i)``,
    the exact shortcut with ``(I - S_ii)^{-2}`` expanded to first order.
    Construction performs the subject-level precomputation; each call to
    :meth:`for_weights` eigendecomposes one penalty mixture, and
    :meth:`score` prices a single rho from that basis without touching
    any per-subject raw data again.
    """

    def __init__(self, X, y, slices, penalties):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        self.n_rows, q = X.shape
        self.norm_y2 = float(y @ y)
        slices = [(s, e) for s, e in slices if e > s]
        Gn = X.T @ X
        tr = float(np.trace(Gn))
        if tr > 0.0:
            Gn = Gn + (GRAM_RIDGE * tr / q) * np.eye(q)
        _, E = sym_sqrt_pair(Gn)
        Xw = X @ E
        self._E = E
        self._Xw = Xw
        self._starts = np.array([s for s, _ in slices], dtype=np.intp)
        self._f = Xw.T @ y
        if slices:
            # f_i = Xw_i' y_i for every subject in one reduction
            self._Fi = np.add.reduceat(Xw * y[:, None], self._starts, axis=0)
        else:
            self._Fi = np.zeros((0, q))
        self._Pw = [E @ np.asarray(P, dtype=float) @ E for P in penalties]

    def for_weights(self, weights):
        """Diagonalize one penalty mixture; returns a per-weight stage."""
        M = sum(w * P for w, P in zip(weights, self._Pw))
        s, U = np.linalg.eigh(M)
        f_t = U.T @ self._f
        Fi_t = self._Fi @ U
        g = f_t**2 - (Fi_t**2).sum(axis=0)
        R = self._Xw @ U
        q = f_t.size
        T = np.zeros((q, q))
        starts = self._starts
        bounds = list(starts) + [self.n_rows]
        for i in range(len(starts)):
            Ri = R[bounds[i] : bounds[i + 1]]
            T += Fi_t[i][:, None] * (Ri.T @ Ri)
        return _WeightStage(
            s=s,
            f_t=f_t,
            g=g,
            F=T * f_t[None, :],
            R=R,
            starts=starts,
            norm_y2=self.norm_y2,
        )


@dataclass
class _WeightStage:
    s: np.ndarray
    f_t: np.ndarray
    g: np.ndarray
    F: np.ndarray
    R: np.ndarray
    starts: np.ndarray
    norm_y2: float

    def score(self, rho):
        """Criterion value at one penalty level; grid data only."""
        # rho * s may overflow for degenerate whitenings; 1/inf = 0 is the
        # correct limit, so the overflow is deliberate.
        with np.errstate(over="ignore"):
            d = 1.0 / (1.0 + rho * self.s)
        v = self.f_t * d
        term1 = float(v @ v)
        term2 = -2.0 * float(d @ self.g)
        term3 = -4.0 * float(d @ (self.F @ d))
        h = self.R @ v
        if self.starts.size:
            rows = np.add.reduceat(self.R * h[:, None], self.starts, axis=0)
            term4 = 2.0 * float(d @ (rows * rows).sum(axis=0))
        else:
            term4 = 0.0
        return self.norm_y2 + term1 + term2 + term3 + term4


def select_grid(X, y, slices, penalties, rho_grid, weight_grid):
    """Minimize the fast criterion over a (weight, rho) grid.

    Parameters
    ----------
    penalties : list of ndarray
        Penalty matrices combined as ``rho * sum_j w_j P_j``.
    rho_grid : sequence of float
        Overall penalty levels.
    weight_grid : sequence of tuple
        Weight vectors, one tuple per grid row (a single ``(1.0,)``
        entry when there is just one penalty).

    Returns
    -------
    SelectionResult
        Ties are broken toward larger rho, then larger first weight.
    """
    sel = GridSelector(X, y, slices, penalties)
    surface = []
    best = None
    for weights in weight_grid:
        stage = sel.for_weights(weights)
        for rho in rho_grid:
            val = stage.score(rho)
            surface.append((float(rho), tuple(weights), float(val)))
            if not np.isfinite(val):
                warnings.warn(
                    f"skipping non-finite selection score at rho={rho!r}",
                    RuntimeWarning,
                    stacklevel=2,
                )
                continue
            key = (val, -rho, tuple(-w for w in weights))
            if best is None or key <= best[0]:
                best = (key, float(rho), weights, float(val))
    if best is None:
        raise FloatingPointError("selection criterion was non-finite on the whole grid")
    _, rho, weights, score = best
    return SelectionResult(rho=rho, weight=weights[0], score=score, surface=surface)
