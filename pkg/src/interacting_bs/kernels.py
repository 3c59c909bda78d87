"""Hot numeric loops of the PDE engine and of path evaluation.

Every kernel is written in the numba-compatible subset of numpy. With numba
active they are compiled with ``njit``; with ``INTERACTING_BS_DISABLE_NUMBA=1``
the same source runs as plain numpy, except the tridiagonal solve which is
routed to LAPACK through :func:`scipy.linalg.solve_banded`.
"""
import numpy as np
from scipy.linalg import solve_banded

from ._jit import USE_NUMBA, jit


@jit
def thomas_solve(lower, diag, upper, rhs):
    """Solve a tridiagonal system with the Thomas algorithm.

    Parameters
    ----------
    lower : ndarray
        Sub-diagonal, ``lower[i]`` multiplies ``x[i-1]``; ``lower[0]`` is ignored.
    diag : ndarray
        Main diagonal.
    upper : ndarray
        Super-diagonal, ``upper[i]`` multiplies ``x[i+1]``; ``upper[-1]`` is ignored.
    rhs : ndarray
        Right-hand side.

    Returns
    -------
    ndarray
        Solution vector. Inputs are not modified.
    """
    n = rhs.shape[0]
    cp = np.empty(n)
    dp = np.empty(n)
    cp[0] = upper[0] / diag[0]
    dp[0] = rhs[0] / diag[0]
    for i in range(1, n):
        denom = diag[i] - lower[i] * cp[i - 1]
        cp[i] = upper[i] / denom
        dp[i] = (rhs[i] - lower[i] * dp[i - 1]) / denom
    x = np.empty(n)
    x[n - 1] = dp[n - 1]
    for i in range(n - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]
    return x


def banded_solve(lower, diag, upper, rhs):
    """LAPACK-backed equivalent of :func:`thomas_solve` (same argument layout)."""
    n = rhs.shape[0]
    ab = np.zeros((3, n))
    ab[0, 1:] = upper[:-1]
    ab[1] = diag
    ab[2, :-1] = lower[1:]
    return solve_banded((1, 1), ab, rhs, check_finite=False)


_tridiag = thomas_solve if USE_NUMBA else banded_solve


@jit
def theta_backward(diff_lo, diff_di, diff_up, adv_lo, adv_di, adv_up,
                   terminal, dts, thetas, rates, bc_low, bc_high, record):
    """Backward induction of ``V_t + A V + k(t) B V = 0`` on a fixed grid.

    ``A`` (diffusion) and ``B`` (``S d/dS - 1``) are tridiagonal operators on
    the interior nodes, given by their three coefficient bands. Substep ``s``
    advances from the later time level to the earlier one with step
    ``dts[s]``, weight ``thetas[s]`` (1/2 Crank-Nicolson, 1 implicit Euler)
    and coefficient ``rates[s]``. ``bc_low``/``bc_high`` hold the Dirichlet
    values at the *new* level of each substep; entry ``-1`` of each belongs to
    the terminal level. After every substep with ``record[s]`` true the
    full vector is stored.

    Returns ``(out, bad)`` where ``out[0]`` is the earliest stored level and
    ``out[-1]`` the terminal data; ``bad`` is the first substep producing a
    non-finite value, or -1.
    """
    n_sub = dts.shape[0]
    n_nodes = terminal.shape[0]
    n_rec = 0
    for s in range(n_sub):
        if record[s]:
            n_rec += 1
    out = np.empty((n_rec + 1, n_nodes))
    out[n_rec, :] = terminal
    v = terminal.copy()
    row = n_rec - 1
    m = n_nodes - 2
    rhs = np.empty(m)
    lo = np.empty(m)
    di = np.empty(m)
    up = np.empty(m)
    for s in range(n_sub):
        h = dts[s]
        th = thetas[s]
        k = rates[s]
        lo[:] = diff_lo + k * adv_lo
        di[:] = diff_di + k * adv_di
        up[:] = diff_up + k * adv_up
        ex = (1.0 - th) * h
        rhs[:] = v[1:-1] + ex * (lo * v[:-2] + di * v[1:-1] + up * v[2:])
        im = th * h
        new_low = bc_low[s]
        new_high = bc_high[s]
        rhs[0] += im * lo[0] * new_low
        rhs[m - 1] += im * up[m - 1] * new_high
        interior = _tridiag(-im * lo, 1.0 - im * di, -im * up, rhs)
        v[0] = new_low
        v[n_nodes - 1] = new_high
        v[1:-1] = interior
        if not np.all(np.isfinite(interior)):
            return out, s
        if record[s]:
            out[row, :] = v
            row -= 1
    return out, -1


@jit
def bilinear_lookup(t_nodes, s_nodes, values, tq, sq):
    """Bilinear interpolation of ``values[t, s]`` at query points.

    Queries must already lie inside the grid; no bounds checks here.
    """
    n = tq.shape[0]
    res = np.empty(n)
    nt = t_nodes.shape[0]
    ns = s_nodes.shape[0]
    for q in range(n):
        j = np.searchsorted(t_nodes, tq[q], side="right") - 1
        if j > nt - 2:
            j = nt - 2
        if j < 0:
            j = 0
        i = np.searchsorted(s_nodes, sq[q], side="right") - 1
        if i > ns - 2:
            i = ns - 2
        if i < 0:
            i = 0
        wt = (tq[q] - t_nodes[j]) / (t_nodes[j + 1] - t_nodes[j])
        ws = (sq[q] - s_nodes[i]) / (s_nodes[i + 1] - s_nodes[i])
        v0 = values[j, i] * (1.0 - ws) + values[j, i + 1] * ws
        v1 = values[j + 1, i] * (1.0 - ws) + values[j + 1, i + 1] * ws
        res[q] = v0 * (1.0 - wt) + v1 * wt
    return res
