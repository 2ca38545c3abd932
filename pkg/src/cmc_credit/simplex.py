"""Dense-tableau two-phase simplex method with Bland's anti-cycling rule.

Solves ``min c'x  s.t.  A_ub x <= b_ub, A_eq x = b_eq, lb <= x <= ub``
where bounds may be infinite.  Variables are shifted/split into
nonnegative ones, finite upper bounds become explicit rows, and every
row receives a slack or an artificial variable.  Phase 1 minimises the sum
of artificials; phase 2 optimises the true objective from the resulting
basis.

The tableau is dense, so memory grows with rows x columns; it is intended
for problems up to a few thousand rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import Infeasible, Unbounded


@dataclass
class SimplexResult:
    x: np.ndarray
    objective: float
    iterations: int
    status: str = "optimal"


def _dense(a, ncols):
    if a is None:
        return np.zeros((0, ncols))
    if hasattr(a, "toarray"):
        a = a.toarray()
    return np.atleast_2d(np.asarray(a, dtype=float)).reshape(-1, ncols)


def _to_standard(c, a_ub, b_ub, a_eq, b_eq, lb, ub):
    """Return (x0, T, extra bound rows) with x = x0 + T y, y >= 0."""
    n = len(c)
    cols = []
    x0 = np.zeros(n)
    bound_rows = []  # (column index in y, upper limit)
    for j in range(n):
        lo, hi = lb[j], ub[j]
        if np.isnan(lo) or np.isnan(hi) or lo == np.inf or hi == -np.inf:
            raise Infeasible(f"variable {j}: empty bound interval [{lo}, {hi}]")
        if np.isfinite(lo):
            x0[j] = lo
            cols.append((j, 1.0))
            if np.isfinite(hi):
                if hi < lo:
                    raise Infeasible(f"variable {j}: upper bound {hi} < lower bound {lo}")
                bound_rows.append((len(cols) - 1, hi - lo))
        elif np.isfinite(hi):
            x0[j] = hi
            cols.append((j, -1.0))
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
    t = np.zeros((n, len(cols)))
    for k, (j, sgn) in enumerate(cols):
        t[j, k] = sgn
    return x0, t, bound_rows


def _pivot(tab, r, c):
    tab[r] /= tab[r, c]
    col = tab[:, c].copy()
    col[r] = 0.0
    tab -= np.outer(col, tab[r])


def _run(tab, basis, allowed, tol, max_iter, it0):
    """Bland-rule simplex on a tableau whose last row holds reduced costs."""
    it = it0
    m = tab.shape[0] - 1
    while True:
        red = tab[-1, :-1]
        cand = np.nonzero(allowed & (red < -tol))[0]
        if len(cand) == 0:
            return it
        j = cand[0]
        colj = tab[:m, j]
        pos = colj > tol
        if not np.any(pos):
            raise Unbounded("objective unbounded below")
        ratios = np.full(m, np.inf)
        ratios[pos] = tab[:m, -1][pos] / colj[pos]
        best = ratios.min()
        ties = np.nonzero(ratios <= best + tol * max(1.0, abs(best)))[0]
        r = ties[np.argmin(basis[ties])]
        _pivot(tab, r, j)
        basis[r] = j
        it += 1
        if it > max_iter:
            raise RuntimeError(f"simplex exceeded {max_iter} iterations")


def simplex(c, a_ub=None, b_ub=None, a_eq=None, b_eq=None, lb=None, ub=None,
            tol: float = 1e-10, max_iter: int = 200000) -> SimplexResult:
    c = np.asarray(c, dtype=float)
    n = len(c)
    a_ub = _dense(a_ub, n)
    a_eq = _dense(a_eq, n)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float).ravel()
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).ravel()
    lb = np.zeros(n) if lb is None else np.asarray(lb, dtype=float)
    ub = np.full(n, np.inf) if ub is None else np.asarray(ub, dtype=float)

    x0, t, bound_rows = _to_standard(c, a_ub, b_ub, a_eq, b_eq, lb, ub)
    ny = t.shape[1]
    # rows: original <= rows, bound rows (<=), equality rows
    au = a_ub @ t
    bu = b_ub - a_ub @ x0
    ab = np.zeros((len(bound_rows), ny))
    bb = np.zeros(len(bound_rows))
    for k, (col, lim) in enumerate(bound_rows):
        ab[k, col] = 1.0
        bb[k] = lim
    ae = a_eq @ t
    be = b_eq - a_eq @ x0
    a_le = np.vstack([au, ab])
    b_le = np.concatenate([bu, bb])
    m_le, m_eq = len(b_le), len(be)
    m = m_le + m_eq

    # slack per <= row; negate rows with negative rhs
    sign_le = np.where(b_le < 0, -1.0, 1.0)
    sign_eq = np.where(be < 0, -1.0, 1.0)
    need_art = np.concatenate([b_le < 0, np.ones(m_eq, bool)])
    n_art = int(need_art.sum())
    ncols = ny + m_le + n_art
    tab = np.zeros((m + 1, ncols + 1))
    tab[:m_le, :ny] = a_le * sign_le[:, None]
    tab[:m_le, ny:ny + m_le] = np.diag(sign_le)
    tab[:m_le, -1] = b_le * sign_le
    tab[m_le:m, :ny] = ae * sign_eq[:, None]
    tab[m_le:m, -1] = be * sign_eq
    basis = np.empty(m, dtype=np.int64)
    art_rows = np.nonzero(need_art)[0]
    for k, r in enumerate(art_rows):
        tab[r, ny + m_le + k] = 1.0
        basis[r] = ny + m_le + k
    for r in np.nonzero(~need_art)[0]:
        basis[r] = ny + r
    is_art = np.zeros(ncols, bool)
    is_art[ny + m_le:] = True

    it = 0
    if n_art:
        tab[-1, :] = 0.0
        tab[-1, :-1][is_art] = 1.0
        for r in art_rows:
            tab[-1] -= tab[r]
        it = _run(tab, basis, np.ones(ncols, bool), tol, max_iter, it)
        scale = max(1.0, np.abs(tab[:m, -1]).max(initial=0.0))
        if -tab[-1, -1] > 1e-9 * scale:
            raise Infeasible(f"phase 1 optimum {-tab[-1, -1]:.3g} > 0")
        keep = np.ones(m + 1, bool)
        for r in range(m):
            if is_art[basis[r]]:
                nz = np.nonzero(~is_art & (np.abs(tab[r, :-1]) > 1e-9))[0]
                if len(nz):
                    _pivot(tab, r, nz[0])
                    basis[r] = nz[0]
                else:
                    keep[r] = False  # redundant row
        tab = tab[keep]
        basis = basis[keep[:-1]]
        tab = np.delete(tab, np.nonzero(is_art)[0], axis=1)
        ncols -= n_art
    m = tab.shape[0] - 1

    cy = np.zeros(ncols)
    cy[:ny] = t.T @ c
    tab[-1, :] = 0.0
    tab[-1, :-1] = cy
    for r in range(m):
        if cy[basis[r]] != 0.0:
            tab[-1] -= cy[basis[r]] * tab[r]
    it = _run(tab, basis, np.ones(ncols, bool), tol, max_iter, it)

    y = np.zeros(ncols)
    y[basis] = tab[:m, -1]
    x = x0 + t @ y[:ny]
    return SimplexResult(x=x, objective=float(c @ x), iterations=it)
