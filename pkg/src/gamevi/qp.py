"""Convex QP subsolver over polyhedra.

Minimizes ``0.5 y' P y + c' y`` over ``{y : D y + d <= 0}`` with P symmetric
positive definite. The engine combines an over-relaxed operator-splitting
(ADMM) iteration, warm-startable in both primal and dual, with an
active-set polish step (a Schur-complement solve through the cached
Cholesky factor of P) that pushes candidate active sets to the requested
KKT tolerance. Warm duals from a previous nearby solve usually make the
first polish exact, which is the performance lever for receding-horizon
re-solves. The contract is only the KKT tolerance; the internal method is
an implementation detail.

Infeasibility is never inferred from divergence: it is certified by the
slack-maximization phase (maximize s subject to D u + d + s <= 0, s <= 1).
"""

import dataclasses

import numpy as np
import scipy.linalg
from scipy.optimize import linprog

from .errors import Infeasible, GameViError

__all__ = [
    "QpProblem", "QpSolution", "QpEngine", "FeasibilityReport",
    "solve_qp", "certify_feasibility",
    "OPTIMAL", "ITER_LIMIT", "INFEASIBLE",
]

OPTIMAL = "optimal"
ITER_LIMIT = "iter_limit"
INFEASIBLE = "infeasible"

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 50_000


@dataclasses.dataclass
class QpProblem:
    """Data of min 0.5 y'Py + c'y over the polyhedron C = {y : Dy + d <= 0}.

    P must be symmetric (to 1e-12, relative) positive definite; C is any
    object with ``D`` and ``d`` attributes (avi.Polyhedron).
    """
    P: np.ndarray
    c: np.ndarray
    C: object

    def __post_init__(self):
        self.P = np.asarray(self.P, dtype=float)
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.P.shape[0]
        if self.P.shape != (n, n) or self.c.shape != (n,):
            raise ValueError("P must be square and c of matching length")
        scale = max(1.0, np.max(np.abs(self.P)))
        if np.max(np.abs(self.P - self.P.T)) > 1e-12 * scale:
            raise ValueError("P must be symmetric")
        if self.C.D.shape[1] != n:
            raise ValueError("constraint dimension does not match P")


@dataclasses.dataclass
class QpSolution:
    """Solution report. ``lam`` are the inequality multipliers (>= 0)."""
    y: np.ndarray
    lam: np.ndarray
    kkt_residual: float
    status: str
    iterations: int

    @property
    def optimal(self):
        return self.status == OPTIMAL


@dataclasses.dataclass
class FeasibilityReport:
    """Outcome of the slack-maximization phase on {u : Du + d <= 0}."""
    slack: float
    point: np.ndarray
    strictly_feasible: bool
    feasible: bool


def certify_feasibility(D, d, strict_tol=1e-9):
    """Maximize s subject to Du + d + s*1 <= 0, s <= 1 (an LP).

    The polyhedron is strictly feasible iff the optimal s is positive,
    feasible iff s >= 0, and certifiably empty iff s < 0.
    """
    D = np.asarray(D, dtype=float)
    d = np.asarray(d, dtype=float).ravel()
    m, n = D.shape
    if m == 0:
        return FeasibilityReport(1.0, np.zeros(n), True, True)
    cost = np.zeros(n + 1)
    cost[-1] = -1.0
    A_ub = np.hstack([D, np.ones((m, 1))])
    bounds = [(None, None)] * n + [(None, 1.0)]
    res = linprog(cost, A_ub=A_ub, b_ub=-d, bounds=bounds, method="highs")
    if res.status != 0:
        raise GameViError(f"slack-maximization LP failed: {res.message}")
    s = float(res.x[-1])
    return FeasibilityReport(s, res.x[:n].copy(), s > strict_tol, s >= -strict_tol)


def _kkt_error(P, c, D, b, y, lam):
    """max of stationarity, primal violation and |lam'(Dy - b)|."""
    if D.shape[0]:
        stat = float(np.max(np.abs(P @ y + c + D.T @ lam)))
        viol = D @ y - b
        prim = max(0.0, float(np.max(viol)))
        compl_ = abs(float(lam @ viol))
        return max(stat, prim, compl_)
    return float(np.max(np.abs(P @ y + c)))


# polish attempts during ADMM happen at k = 2^j - 1 early on, then periodically
_POLISH_EARLY = frozenset([1, 3, 7, 15, 31, 63, 127])


class QpEngine:
    """Reusable solver for a family of QPs sharing (P, D).

    The linear term c and the offsets may change between calls; the KKT
    factorization, the Cholesky factor of P and the projected Gram matrix
    D P^{-1} D' are computed once. Warm starts (primal and dual) are passed
    per call, so one engine can serve several independent iterate streams.
    """

    def __init__(self, P, D, sigma=1e-6, rho=0.1, alpha=1.6):
        self.P = np.asarray(P, dtype=float)
        self.D = np.asarray(D, dtype=float)
        self.n = self.P.shape[0]
        self.m = self.D.shape[0]
        self.sigma = sigma
        self.alpha = alpha
        self._chol = scipy.linalg.cho_factor(self.P)
        if self.m:
            self._PinvDt = scipy.linalg.cho_solve(self._chol, self.D.T)
            self._gram = self.D @ self._PinvDt
        self._rho = rho
        self._lu = None  # ADMM KKT factored lazily; polish alone often suffices

    def _factor(self, rho):
        kkt = np.zeros((self.n + self.m, self.n + self.m))
        kkt[:self.n, :self.n] = self.P + self.sigma * np.eye(self.n)
        kkt[:self.n, self.n:] = self.D.T
        kkt[self.n:, :self.n] = self.D
        kkt[self.n:, self.n:] = -np.eye(self.m) / rho
        self._lu = scipy.linalg.lu_factor(kkt)
        self._rho = rho

    def _try_active_set(self, c, b, y_free, active, tol):
        """Solve assuming the given rows are active; None unless KKT <= tol.

        Uses the Schur complement D_A P^{-1} D_A' lam = D_A y_free - b_A, so
        the only per-call dense work is one small least-squares solve and a
        rank-|A| update of the free minimizer.
        """
        active = np.asarray(active, dtype=int)
        if active.size == 0:
            return None
        S = self._gram[np.ix_(active, active)]
        rhs = self.D[active] @ y_free - b[active]
        lam_a, *_ = np.linalg.lstsq(S, rhs, rcond=None)
        neg = lam_a < 0.0
        if np.any(lam_a < -1e-9 * max(1.0, float(np.max(np.abs(lam_a))))):
            # retry once without the clearly inactive rows
            keep = ~neg
            if not np.any(keep):
                return None
            active = active[keep]
            S = self._gram[np.ix_(active, active)]
            rhs = self.D[active] @ y_free - b[active]
            lam_a, *_ = np.linalg.lstsq(S, rhs, rcond=None)
        lam_a = np.maximum(lam_a, 0.0)
        y = y_free - self._PinvDt[:, active] @ lam_a
        lam = np.zeros(self.m)
        lam[active] = lam_a
        err = _kkt_error(self.P, c, self.D, b, y, lam)
        if err <= tol:
            return QpSolution(y, lam, err, OPTIMAL, 0)
        return None

    def solve(self, c, b=None, warm=None, warm_dual=None,
              tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
        """Solve for the given linear term and constraint offsets b (= -d).

        Returns a QpSolution; raises Infeasible when the slack-maximization
        phase certifies an empty polyhedron.
        """
        c = np.asarray(c, dtype=float).ravel()
        if self.m == 0:
            y = scipy.linalg.cho_solve(self._chol, -c)
            err = _kkt_error(self.P, c, self.D, np.zeros(0), y, np.zeros(0))
            return QpSolution(y, np.zeros(0), err, OPTIMAL, 0)
        if b is None:
            raise ValueError("constraint offsets b are required when D has rows")
        b = np.asarray(b, dtype=float).ravel()

        # Unconstrained minimizer already feasible: exact solution, zero duals.
        y_free = scipy.linalg.cho_solve(self._chol, -c)
        violation = self.D @ y_free - b
        if np.all(violation <= 0.0):
            err = _kkt_error(self.P, c, self.D, b, y_free, np.zeros(self.m))
            return QpSolution(y_free, np.zeros(self.m), err, OPTIMAL, 0)

        # Direct active-set guesses before iterating: the caller's previous
        # duals, then the rows violated by the free minimizer.
        if warm_dual is not None:
            warm_dual = np.maximum(np.asarray(warm_dual, dtype=float).ravel(), 0.0)
            guess = np.flatnonzero(warm_dual > 1e-12)
            sol = self._try_active_set(c, b, y_free, guess, tol)
            if sol is not None:
                return sol
        sol = self._try_active_set(c, b, y_free, np.flatnonzero(violation > 0.0), tol)
        if sol is not None:
            return sol

        # Operator-splitting iterations with periodic polish.
        if self._lu is None:
            self._factor(self._rho)
        rho = self._rho
        x = np.array(warm, dtype=float).ravel() if warm is not None else y_free.copy()
        lam = warm_dual if warm_dual is not None else np.zeros(self.m)
        z = np.minimum(self.D @ x, b)
        best = None
        feas_checked = False
        for k in range(1, max_iter + 1):
            rhs = np.concatenate([self.sigma * x - c, z - lam / rho])
            sol_kkt = scipy.linalg.lu_solve(self._lu, rhs)
            x_t = sol_kkt[:self.n]
            nu = sol_kkt[self.n:]
            z_t = z + (nu - lam) / rho
            x = self.alpha * x_t + (1.0 - self.alpha) * x
            w = self.alpha * z_t + (1.0 - self.alpha) * z + lam / rho
            z = np.minimum(w, b)
            lam = rho * (w - z)

            err = _kkt_error(self.P, c, self.D, b, x, lam)
            if best is None or err < best[2]:
                best = (x.copy(), lam.copy(), err)
            if err <= tol:
                return QpSolution(x, lam, err, OPTIMAL, k)

            if k in _POLISH_EARLY or k % 128 == 0:
                active = np.flatnonzero((b - z < lam) | (b - self.D @ x < 1e-9))
                sol = self._try_active_set(c, b, y_free, active, tol)
                if sol is not None:
                    return QpSolution(sol.y, sol.lam, sol.kkt_residual, OPTIMAL, k)

            # Certified infeasibility test when primal violation persists.
            if not feas_checked and k % 256 == 0:
                r_prim = float(np.max(np.abs(self.D @ x - z)))
                if r_prim > 1e-6:
                    feas_checked = True
                    report = certify_feasibility(self.D, -b)
                    if not report.feasible:
                        raise Infeasible(
                            "constraint set certified empty "
                            f"(max slack {report.slack:.3e})", slack=report.slack)

            # Residual balancing: occasionally retune rho and refactor.
            if k % 200 == 0:
                r_prim = float(np.max(np.abs(self.D @ x - z)))
                r_dual = float(np.max(np.abs(self.P @ x + c + self.D.T @ lam)))
                if r_prim > 0 and r_dual > 0:
                    ratio = np.sqrt(r_prim / r_dual)
                    if ratio > 5.0 or ratio < 0.2:
                        rho = float(np.clip(rho * ratio, 1e-6, 1e6))
                        self._factor(rho)

        x, lam, err = best
        return QpSolution(x, lam, err, ITER_LIMIT, max_iter)


def solve_qp(problem, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, warm=None,
             warm_dual=None):
    """One-shot QP solve; see QpEngine for the reusable interface.

    Returns a QpSolution whose status is ``optimal`` (KKT residual <= tol)
    or ``iter_limit`` (best iterate so far). Raises Infeasible when the
    constraint set is certified empty.
    """
    engine = QpEngine(problem.P, problem.C.D)
    return engine.solve(problem.c, b=-np.asarray(problem.C.d, dtype=float).ravel(),
                        warm=warm, warm_dual=warm_dual, tol=tol, max_iter=max_iter)
