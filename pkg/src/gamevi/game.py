"""Linear-quadratic dynamic games and their compilation to affine VIs.

A game couples N agents through shared dynamics x+ = A x + sum_i B_i u_i,
per-agent quadratic stage costs 0.5(||x||_Qi^2 + ||u_i||_Ri^2), and joint
polyhedral stage constraints. Over a horizon T the open-loop equilibrium
problem condenses (after eliminating the state with the prediction matrices
Theta, Gamma_i) to an affine VI whose operator matrix is

    M = blkdg(Rbar_i) + blkmat(Gamma_i' Qbar_i Gamma_j),
    Rbar_i = I_T kron R_i,   Qbar_i = blkdg(I_{T-1} kron Q_i, P_i),

where P_i comes from the coupled algebraic Riccati equations of the
infinite-horizon unconstrained equilibrium. P_i is in general nonsymmetric,
which is why M is nonsymmetric and the splitting machinery earns its keep.

Stacking convention: u = col_i(col_t(u_i[t])) -- agent-major, time inner.
Stage constraints come in two families:

* mixed rows  Ex x[t] + sum_i Eu_i u_i[t] + e <= 0   for t = 0..T-1
  (pure input constraints are the Ex = 0 special case; pre-stabilization
  turns input boxes into genuinely mixed rows), and
* state rows  Dx x[t] + dx <= 0                      for t = 1..T
  (x0 is measured, not decided, so it is assumed admissible).
"""

import dataclasses
import json

import numpy as np
import scipy.linalg

from . import qp
from .avi import AviProblem, Polyhedron
from .blockmat import blkdg, build_gamma, build_theta, kron
from .errors import NoConvergence, SingularA
from .solvers import make_dr_splitting

__all__ = [
    "LqGame", "RiccatiSolution", "AugmentedRiccati", "CompiledGameVi",
    "StandingAssumptionsDiagnosis", "CareSolvabilityDiagnosis", "solve_coupled_riccati",
    "build_augmented", "solve_are", "compile_vi", "q_of",
    "unconstrained_ne_sequence", "in_terminal_set", "check_standing_assumptions",
    "check_care_solvability", "best_response", "rollout", "read_game", "write_game",
]


def _matrices(items, name):
    out = [np.atleast_2d(np.asarray(m, dtype=float)) for m in items]
    if not out:
        raise ValueError(f"{name} must be a non-empty list")
    return out


class LqGame:
    """Game data over a fixed horizon; immutable by convention after build."""

    def __init__(self, A, B, Q, R, T, Ex=None, Eu=None, e=None,
                 Dx=None, dx=None, meta=None):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.B = _matrices(B, "B")
        self.Q = _matrices(Q, "Q")
        self.R = _matrices(R, "R")
        self.T = int(T)
        self.N = len(self.B)
        self.n = self.A.shape[0]
        self.m = [b.shape[1] for b in self.B]
        if self.A.shape != (self.n, self.n):
            raise ValueError("A must be square")
        if self.T < 1:
            raise ValueError("horizon must be >= 1")
        if len(self.Q) != self.N or len(self.R) != self.N:
            raise ValueError("B, Q, R must have one entry per agent")
        for i in range(self.N):
            if self.B[i].shape[0] != self.n:
                raise ValueError(f"B[{i}] height must equal the state dimension")
            if self.Q[i].shape != (self.n, self.n):
                raise ValueError(f"Q[{i}] must be n x n")
            if self.R[i].shape != (self.m[i], self.m[i]):
                raise ValueError(f"R[{i}] must match the width of B[{i}]")
        # mixed rows: Ex x[t] + sum_i Eu_i u_i[t] + e <= 0, t = 0..T-1
        if Eu is None:
            self.Ex = np.zeros((0, self.n))
            self.Eu = [np.zeros((0, mi)) for mi in self.m]
            self.e = np.zeros(0)
        else:
            self.Eu = _matrices(Eu, "Eu")
            p = self.Eu[0].shape[0]
            self.Ex = (np.zeros((p, self.n)) if Ex is None
                       else np.atleast_2d(np.asarray(Ex, dtype=float)))
            self.e = np.asarray(e, dtype=float).ravel()
            if len(self.Eu) != self.N or any(m.shape[0] != p for m in self.Eu):
                raise ValueError("Eu blocks must agree on the row count")
            if self.Ex.shape != (p, self.n) or self.e.shape != (p,):
                raise ValueError("Ex / e shapes do not match the mixed rows")
        # state rows: Dx x[t] + dx <= 0, t = 1..T
        if Dx is None:
            self.Dx = np.zeros((0, self.n))
            self.dx = np.zeros(0)
        else:
            self.Dx = np.atleast_2d(np.asarray(Dx, dtype=float))
            self.dx = np.asarray(dx, dtype=float).ravel()
            if self.Dx.shape[1] != self.n or self.Dx.shape[0] != self.dx.shape[0]:
                raise ValueError("Dx / dx shapes are inconsistent")
        self.meta = dict(meta) if meta else {}
        self.source = None  # original parts for JSON round-trips
        self.prestab_gains = None

    @classmethod
    def from_stage_constraints(cls, A, B, Q, R, T, Du=None, du=None,
                               Dx=None, dx=None, K_pre=None, meta=None):
        """Build from shared per-agent input rows sum_i Du_i u_i[t] + du <= 0
        and state rows, optionally applying a pre-stabilizing substitution
        u_i = K_pre_i x + v_i (constraints and dynamics are rewritten in the
        residual input v)."""
        game = cls(A, B, Q, R, T, Eu=Du, e=du, Dx=Dx, dx=dx, meta=meta)
        source = {
            "A": game.A, "B": game.B, "Q": game.Q, "R": game.R, "T": game.T,
            "Du": None if Du is None else game.Eu, "du": None if Du is None else game.e,
            "Dx": None if Dx is None else game.Dx, "dx": None if Dx is None else game.dx,
            "K_pre": None,
        }
        if K_pre is not None:
            gains = _matrices(K_pre, "K_pre")
            if len(gains) != game.N or any(
                    g.shape != (game.m[i], game.n) for i, g in enumerate(gains)):
                raise ValueError("K_pre gains must be m_i x n per agent")
            game = game.prestabilized(gains)
            source["K_pre"] = gains
        game.source = source
        return game

    def prestabilized(self, gains):
        """Rewrite the game in residual inputs u_i = K_i x + v_i.

        The dynamics matrix becomes A + sum_i B_i K_i; mixed rows pick up
        the state feedthrough sum_i Eu_i K_i; state rows and cost weights
        are unchanged (the input weight applies to the residual input).
        """
        gains = _matrices(gains, "gains")
        A_new = self.A + sum(self.B[i] @ gains[i] for i in range(self.N))
        Ex_new = self.Ex + sum(self.Eu[i] @ gains[i] for i in range(self.N))
        out = LqGame(A_new, self.B, self.Q, self.R, self.T,
                     Ex=Ex_new, Eu=self.Eu, e=self.e, Dx=self.Dx, dx=self.dx,
                     meta=self.meta)
        out.prestab_gains = gains
        return out

    @property
    def input_dim(self):
        return sum(self.m) * self.T

    def agent_slice(self, i):
        off = sum(self.m[j] for j in range(i)) * self.T
        return slice(off, off + self.m[i] * self.T)

    def split_input(self, u):
        """Stacked input -> list of per-agent (T, m_i) arrays."""
        return [np.asarray(u[self.agent_slice(i)]).reshape(self.T, self.m[i])
                for i in range(self.N)]


def rollout(game, x0, u, steps=None):
    """Step-by-step simulation of x+ = A x + sum_i B_i u_i[t].

    u is a stacked input (agent-major); returns the (steps+1, n) state
    trajectory starting at x0. This is the arithmetic ground truth the
    condensed prediction matrices must reproduce.
    """
    steps = game.T if steps is None else steps
    blocks = game.split_input(u)
    xs = np.zeros((steps + 1, game.n))
    xs[0] = np.asarray(x0, dtype=float).ravel()
    for t in range(steps):
        xs[t + 1] = game.A @ xs[t] + sum(
            game.B[i] @ blocks[i][t] for i in range(game.N))
    return xs


@dataclasses.dataclass
class RiccatiSolution:
    """Coupled-ARE products. P_ol entries are in general nonsymmetric."""
    P_ol: list
    K_ol: list
    residuals: list
    iterations: int
    A_cl: np.ndarray
    spectral_radius: float


def solve_coupled_riccati(game, tol=1e-10, max_iter=10_000, warm=None):
    """Fixed-point sweep for the coupled AREs

        P_i = Q_i + A' P_i (A + sum_j B_j K_j)
        K_i = -R_i^{-1} B_i' P_i (A + sum_j B_j K_j).

    Each sweep solves the K-equations jointly (they are linear in the
    stacked K once P is fixed) and then updates every P_i; iteration starts
    from P_i = Q_i, K_i = 0. The per-sweep P increment equals the equation
    residual at the current iterate, so the stopping rule is the residual;
    tol is measured relative to 1 + max|P| to stay meaningful when the
    cost-to-go matrices are large.
    """
    A, B, Q, R = game.A, game.B, game.Q, game.R
    n, N, m = game.n, game.N, game.m
    if warm is not None:
        P = [np.array(p, dtype=float) for p in warm[0]]
        K = [np.array(k, dtype=float) for k in warm[1]]
    else:
        P = [q.copy() for q in Q]
        K = [np.zeros((mi, n)) for mi in m]
    m_tot = sum(m)
    offs = np.concatenate([[0], np.cumsum(m)])
    RinvBt = [np.linalg.solve(R[i], B[i].T) for i in range(N)]

    def sweep_K(P):
        G = np.empty((m_tot, m_tot))
        rhs = np.empty((m_tot, n))
        for i in range(N):
            lead = RinvBt[i] @ P[i]
            for j in range(N):
                G[offs[i]:offs[i+1], offs[j]:offs[j+1]] = lead @ B[j]
            rhs[offs[i]:offs[i+1]] = -lead @ A
        try:
            Kstack = np.linalg.solve(np.eye(m_tot) + G, rhs)
        except np.linalg.LinAlgError as exc:
            raise NoConvergence(f"coupled Riccati K-system is singular: {exc}")
        return [Kstack[offs[i]:offs[i+1]] for i in range(N)]

    res = np.inf
    scale = 1.0
    for it in range(1, max_iter + 1):
        K = sweep_K(P)
        A_cl = A + sum(B[i] @ K[i] for i in range(N))
        P_new = [Q[i] + A.T @ P[i] @ A_cl for i in range(N)]
        res = max(float(np.max(np.abs(P_new[i] - P[i]))) for i in range(N))
        scale = 1.0 + max(float(np.max(np.abs(p))) for p in P_new)
        P = P_new
        if not np.isfinite(res) or res > 1e14:
            raise NoConvergence(
                f"coupled Riccati sweep diverged at iteration {it} (residual {res:.3e})")
        if res <= tol * scale:
            break
    if res > tol * scale:
        raise NoConvergence(
            f"coupled Riccati sweep did not reach tol={tol:.1e} in {max_iter} "
            f"iterations (relative residual {res/scale:.3e})")
    K = sweep_K(P)
    A_cl = A + sum(B[i] @ K[i] for i in range(N))
    rho = float(np.max(np.abs(np.linalg.eigvals(A_cl))))
    residuals = []
    for i in range(N):
        res_p = float(np.max(np.abs(P[i] - (Q[i] + A.T @ P[i] @ A_cl))))
        res_k = float(np.max(np.abs(K[i] + RinvBt[i] @ P[i] @ A_cl)))
        residuals.append(max(res_p, res_k))
    if rho >= 1.0:
        raise NoConvergence(
            f"coupled Riccati produced an unstable closed loop (rho = {rho:.6f})")
    return RiccatiSolution(P, K, residuals, it, A_cl, rho)


def build_augmented(game, riccati):
    """Per-agent augmented LQR data (A_hat_i, B_hat_i, Q_hat_i).

    The augmented state stacks agent i's own prediction on top of the
    collective equilibrium prediction: the upper-right block is the drift
    sum_{j != i} B_j K_j, the lower-right block is the equilibrium closed
    loop, and agent i's input only enters the top half.
    """
    n, N = game.n, game.N
    out = []
    for i in range(N):
        drift = sum(game.B[j] @ riccati.K_ol[j] for j in range(N) if j != i)
        if N == 1:
            drift = np.zeros((n, n))
        A_hat = np.block([[game.A, drift],
                          [np.zeros((n, n)), riccati.A_cl]])
        B_hat = np.vstack([game.B[i], np.zeros((n, game.m[i]))])
        Q_hat = blkdg(game.Q[i], np.zeros((n, n)))
        out.append((A_hat, B_hat, Q_hat))
    return out


def solve_are(A_hat, B_hat, Q_hat, R, tol=1e-12, max_iter=200_000):
    """Single DARE by backward recursion from P = Q_hat.

    The iterate increment equals the residual of the fixed-point pair

        P = Q + A' P (A + B K),   K = -R^{-1} B' P (A + B K),

    so the loop stops when the increment falls below tol (relative to
    1 + max|P|). P is symmetrized every step and is PSD along the whole
    recursion.
    """
    A_hat = np.asarray(A_hat, dtype=float)
    B_hat = np.asarray(B_hat, dtype=float)
    Q_hat = np.asarray(Q_hat, dtype=float)
    R = np.atleast_2d(np.asarray(R, dtype=float))
    P = Q_hat.copy()
    for it in range(1, max_iter + 1):
        K = -np.linalg.solve(R + B_hat.T @ P @ B_hat, B_hat.T @ P @ A_hat)
        P_new = Q_hat + A_hat.T @ P @ (A_hat + B_hat @ K)
        P_new = (P_new + P_new.T) / 2.0
        delta = float(np.max(np.abs(P_new - P)))
        scale = 1.0 + float(np.max(np.abs(P_new)))
        P = P_new
        if not np.isfinite(delta) or delta > 1e14:
            raise NoConvergence(f"ARE recursion diverged at iteration {it}")
        if delta <= tol * scale:
            break
    else:
        raise NoConvergence(
            f"ARE recursion did not reach tol={tol:.1e} in {max_iter} iterations")
    K = -np.linalg.solve(R + B_hat.T @ P @ B_hat, B_hat.T @ P @ A_hat)
    return P, K


@dataclasses.dataclass
class AugmentedRiccati:
    """Uncoupled augmented-ARE products; P_hat entries are symmetric PSD."""
    P_hat: list
    K_hat: list
    residuals: list


class CompiledGameVi:
    """Everything the receding-horizon loop needs, precomputed once.

    Attributes of note:
      M_ol       the VI matrix (nonsymmetric in general)
      qmap       q of x0 is qmap @ x0
      D, d0, Dmap   constraints: D u + (d0 + Dmap x0) <= 0
      splitting  DR splitting of M_ol with H = I
      riccati, augmented   the Riccati products backing M_ol and the
                 best-response terminal cost
    """

    def __init__(self, game, riccati, augmented, theta, gammas, M_ol, qmap,
                 D, d0, Dmap, splitting, Qbar, Rbar):
        self.game = game
        self.riccati = riccati
        self.augmented = augmented
        self.theta = theta
        self.gammas = gammas
        self.M_ol = M_ol
        self.qmap = qmap
        self.D = D
        self.d0 = d0
        self.Dmap = Dmap
        self.splitting = splitting
        self.Qbar = Qbar
        self.Rbar = Rbar
        # constraint rows seen by the equilibrium feedback: used by the
        # terminal-set membership test
        G_mix = game.Ex + sum(game.Eu[i] @ riccati.K_ol[i] for i in range(game.N))
        self._fb_rows = np.vstack([G_mix, game.Dx])
        self._fb_offsets = np.concatenate([game.e, game.dx])
        norms = np.linalg.norm(self._fb_rows, axis=1)
        self._fb_norms = norms
        self._power_sup = self._bound_power_norms(riccati.A_cl)

    @staticmethod
    def _bound_power_norms(A_cl, cap=100_000):
        """sup_k ||A_cl^k||_2, bounded by the prefix maximum once some power
        has norm <= 1/2 (later powers factor through it)."""
        sup = 1.0
        power = np.eye(A_cl.shape[0])
        for _ in range(cap):
            power = power @ A_cl
            nrm = float(np.linalg.norm(power, 2))
            sup = max(sup, nrm)
            if nrm <= 0.5:
                return sup
        raise NoConvergence("could not bound the closed-loop power norms")

    def q_of(self, x0):
        return self.qmap @ np.asarray(x0, dtype=float).ravel()

    def offsets_at(self, x0):
        return self.d0 + self.Dmap @ np.asarray(x0, dtype=float).ravel()

    def polyhedron_at(self, x0):
        return Polyhedron(self.D, self.offsets_at(x0))

    def avi_at(self, x0):
        return AviProblem(self.M_ol, self.q_of(x0), self.polyhedron_at(x0))

    def first_stage(self, u):
        """Extract col_i(u_i[0]) from a stacked full-horizon input."""
        game = self.game
        return np.concatenate([
            u[game.agent_slice(i)][:game.m[i]] for i in range(game.N)])


def compile_vi(game, riccati_tol=1e-10, riccati_max_iter=10_000,
               are_tol=1e-12, are_max_iter=200_000):
    """Compile a game into its affine VI together with the DR splitting.

    Raises InvalidSplitting (with the monotonicity estimate attached) when
    the symmetric part of the compiled matrix is not positive definite, and
    NoConvergence if either Riccati stage fails.
    """
    riccati = solve_coupled_riccati(game, tol=riccati_tol,
                                    max_iter=riccati_max_iter)
    n, N, T = game.n, game.N, game.T
    theta = build_theta(game.A, T)
    gammas = [build_gamma(game.A, game.B[i], T) for i in range(N)]

    dims = [game.m[i] * T for i in range(N)]
    offs = np.concatenate([[0], np.cumsum(dims)])
    M_ol = np.zeros((offs[-1], offs[-1]))
    qmap = np.zeros((offs[-1], n))
    Qbar = [blkdg([game.Q[i]] * (T - 1) + [riccati.P_ol[i]]) for i in range(N)]
    Rbar = [kron(np.eye(T), game.R[i]) for i in range(N)]
    for i in range(N):
        GtQ = gammas[i].T @ Qbar[i]
        M_ol[offs[i]:offs[i+1], offs[i]:offs[i+1]] = Rbar[i]
        for j in range(N):
            M_ol[offs[i]:offs[i+1], offs[j]:offs[j+1]] += GtQ @ gammas[j]
        qmap[offs[i]:offs[i+1]] = GtQ @ theta

    # constraint stack: mixed rows for stages 0..T-1 on top, state rows for
    # stages 1..T below; agent j owns one column block of each family
    p_mix = game.e.shape[0]
    p_x = game.dx.shape[0]
    IEx = kron(np.eye(T), game.Ex)
    IDx = kron(np.eye(T), game.Dx)
    # stage-state predictor col(A^0 .. A^{T-1}) and the matching shifted gammas
    theta_stage = np.vstack([np.eye(n), theta[:n * (T - 1)]])
    col_blocks = []
    for j in range(N):
        shifted = np.zeros((n * T, dims[j]))
        shifted[n:] = gammas[j][:n * (T - 1)]
        mix_block = kron(np.eye(T), game.Eu[j]) + IEx @ shifted
        state_block = IDx @ gammas[j]
        col_blocks.append(np.vstack([mix_block, state_block]))
    D = np.hstack(col_blocks) if col_blocks else np.zeros((0, 0))
    d0 = np.concatenate([np.tile(game.e, T), np.tile(game.dx, T)])
    Dmap = np.vstack([IEx @ theta_stage, IDx @ theta])

    splitting = make_dr_splitting(M_ol)

    aug_parts = build_augmented(game, riccati)
    P_hat, K_hat, residuals = [], [], []
    for i, (A_hat, B_hat, Q_hat) in enumerate(aug_parts):
        P, K = solve_are(A_hat, B_hat, Q_hat, game.R[i],
                         tol=are_tol, max_iter=are_max_iter)
        K2 = -np.linalg.solve(game.R[i] + B_hat.T @ P @ B_hat,
                              B_hat.T @ P @ A_hat)
        res = float(np.max(np.abs(P - (Q_hat + A_hat.T @ P @ (A_hat + B_hat @ K2)))))
        P_hat.append(P)
        K_hat.append(K)
        residuals.append(res)
    augmented = AugmentedRiccati(P_hat, K_hat, residuals)

    return CompiledGameVi(game, riccati, augmented, theta, gammas, M_ol, qmap,
                          D, d0, Dmap, splitting, Qbar, Rbar)


def q_of(compiled, x0):
    """Affine offset col_i(Gamma_i' Qbar_i Theta x0) of the compiled VI."""
    return compiled.q_of(x0)


def unconstrained_ne_sequence(compiled, x0, horizon=None):
    """Stacked feedback rollout u_i[t] = K_i (A + sum_j B_j K_j)^t x0.

    Agent-major stacking to match the VI ordering; this is the closed-form
    VI solution whenever x0 lies in the terminal set.
    """
    game = compiled.game
    T = game.T if horizon is None else int(horizon)
    x0 = np.asarray(x0, dtype=float).ravel()
    states = np.zeros((T, game.n))
    x = x0
    for t in range(T):
        states[t] = x
        x = compiled.riccati.A_cl @ x
    return np.concatenate([
        (states @ compiled.riccati.K_ol[i].T).ravel() for i in range(game.N)])


def in_terminal_set(compiled, x, horizon_check=50, margin=1e-9):
    """Sound membership test for the terminal set.

    Simulates the equilibrium feedback loop for horizon_check steps and
    requires every visited state to satisfy all constraint rows (state rows
    plus the input rows mapped through the feedback gains) with at least
    the given strict margin; the tail beyond the simulated horizon is
    covered by a norm-ball argument using sup_k ||A_cl^k||. Conservative:
    may reject boundary states, never falsely accepts.
    """
    G = compiled._fb_rows
    g = compiled._fb_offsets
    y = np.asarray(x, dtype=float).ravel()
    for _ in range(horizon_check):
        if G.shape[0] and np.max(G @ y + g) > -margin:
            return False
        y = compiled.riccati.A_cl @ y
    if G.shape[0] == 0:
        return True
    # radius of a ball certified strictly feasible, shrunk by the worst
    # transient amplification of the stable closed loop
    nz = compiled._fb_norms > 0.0
    if np.any((~nz) & (g > -margin)):
        return False
    if not np.any(nz):
        return True
    r_feas = np.min((-g[nz] - margin) / compiled._fb_norms[nz])
    if r_feas <= 0.0:
        return False
    return bool(np.linalg.norm(y) <= r_feas / compiled._power_sup)


@dataclasses.dataclass
class StandingAssumptionsDiagnosis:
    """Per-agent structural checks: Q PSD, R PD, (A, B_i) stabilizable and
    (A, C_i) detectable (PBH rank tests; null(Q_i) = null(C_i), so Q_i can
    stand in for C_i). Diagnostics only -- constructors never enforce them.
    """
    q_psd: list
    r_pd: list
    stabilizable: list
    detectable: list

    @property
    def holds(self):
        return (all(self.q_psd) and all(self.r_pd)
                and all(self.stabilizable) and all(self.detectable))


def check_standing_assumptions(game, tol=1e-9):
    eigs_a = np.linalg.eigvals(game.A)
    unstable = [lam for lam in eigs_a if abs(lam) >= 1.0 - tol]
    n = game.n
    q_psd, r_pd, stabilizable, detectable = [], [], [], []
    for i in range(game.N):
        Q, R = game.Q[i], game.R[i]
        q_psd.append(bool(np.min(np.linalg.eigvalsh((Q + Q.T) / 2)) >= -tol))
        r_pd.append(bool(np.min(np.linalg.eigvalsh((R + R.T) / 2)) > tol))
        stab = all(
            np.linalg.matrix_rank(np.hstack([lam * np.eye(n) - game.A, game.B[i]]),
                                  tol=1e-10) == n
            for lam in unstable)
        det = all(
            np.linalg.matrix_rank(np.vstack([lam * np.eye(n) - game.A, Q]),
                                  tol=1e-10) == n
            for lam in unstable)
        stabilizable.append(bool(stab))
        detectable.append(bool(det))
    return StandingAssumptionsDiagnosis(q_psd, r_pd, stabilizable, detectable)


@dataclasses.dataclass
class CareSolvabilityDiagnosis:
    """Eigenstructure diagnostic for solvability of the coupled AREs."""
    n: int
    stable_count: int
    complementary: bool
    eigenvalues: np.ndarray

    @property
    def holds(self):
        return self.stable_count == self.n and self.complementary


def check_care_solvability(game):
    """Count stable eigenvalues of the structured pencil matrix H and test
    whether its stable invariant subspace is complementary to the costate
    coordinates (rank of the top n rows of the stable Schur basis).

    Raises SingularA when A is not (numerically) invertible.
    """
    A = game.A
    n, N = game.n, game.N
    if np.linalg.cond(A) > 1e12:
        raise SingularA("A must be invertible for the solvability diagnostic")
    A_inv_T = np.linalg.inv(A.T)
    S = [game.B[i] @ np.linalg.solve(game.R[i], game.B[i].T) for i in range(N)]
    H = np.zeros((n + N * n, n + N * n))
    H[:n, :n] = A + sum(S[j] @ A_inv_T @ game.Q[j] for j in range(N))
    for j in range(N):
        H[:n, n + j * n:n + (j + 1) * n] = -S[j] @ A_inv_T
        H[n + j * n:n + (j + 1) * n, :n] = -A_inv_T @ game.Q[j]
    H[n:, n:] = kron(np.eye(N), A_inv_T)
    Tmat, Z, sdim = scipy.linalg.schur(H, output="real", sort="iuc")
    eigenvalues = np.linalg.eigvals(H)
    complementary = False
    if sdim > 0:
        basis_top = Z[:n, :sdim]
        svals = np.linalg.svd(basis_top, compute_uv=False)
        complementary = (sdim == n) and bool(svals[-1] > 1e-10)
    return CareSolvabilityDiagnosis(n, int(sdim), complementary, eigenvalues)


def best_response(compiled, x0, agent, others, tol=1e-8, qp_max_iter=50_000):
    """Agent ``agent``'s exact best response to the profile ``others``.

    Minimizes the finite-horizon objective -- stage costs plus the terminal
    cost 0.5 || col(own terminal state, profile terminal state) ||^2 in the
    augmented terminal weight -- over the agent's own input block, subject
    to the joint constraints with everyone else frozen at ``others``. This
    is a strictly convex QP; at an equilibrium it returns the agent's own
    block. Raises Infeasible when no response satisfies the constraints.
    """
    game = compiled.game
    i = int(agent)
    x0 = np.asarray(x0, dtype=float).ravel()
    others = np.asarray(others, dtype=float).ravel()
    n, T = game.n, game.T
    sl = game.agent_slice(i)
    gamma_i = compiled.gammas[i]
    P_hat = compiled.augmented.P_hat[i]
    P11 = P_hat[:n, :n]
    P12 = P_hat[:n, n:]

    # predicted states for stages 1..T with agent i's block zeroed / frozen
    base = compiled.theta @ x0
    for j in range(game.N):
        if j != i:
            base += compiled.gammas[j] @ others[game.agent_slice(j)]
    x_all = base + gamma_i @ others[sl]          # profile prediction
    x_term_profile = x_all[(T - 1) * n:]

    stage_blocks = [game.Q[i]] * (T - 1) + [P11]
    W = blkdg(stage_blocks)
    P_qp = kron(np.eye(T), game.R[i]) + gamma_i.T @ W @ gamma_i
    P_qp = (P_qp + P_qp.T) / 2.0
    lift = np.zeros(n * T)
    lift[(T - 1) * n:] = P12 @ x_term_profile
    c_qp = gamma_i.T @ (W @ base + lift)

    b = -(compiled.offsets_at(x0) + compiled.D @ others
          - compiled.D[:, sl] @ others[sl])
    engine = qp.QpEngine(P_qp, compiled.D[:, sl])
    sol = engine.solve(c_qp, b=b, warm=others[sl], tol=tol, max_iter=qp_max_iter)
    return sol.y


def write_game(game, path):
    """Serialize a game built via from_stage_constraints (original parts,
    including any pre-stabilizing gains, are preserved for the round trip)."""
    if game.source is not None:
        src = game.source
        payload = {
            "A": src["A"].tolist(),
            "B": [b.tolist() for b in src["B"]],
            "Q": [m.tolist() for m in src["Q"]],
            "R": [m.tolist() for m in src["R"]],
            "T": src["T"],
        }
        if src["Du"] is not None:
            payload["Du"] = [m.tolist() for m in src["Du"]]
            payload["du"] = src["du"].tolist()
        if src["Dx"] is not None:
            payload["Dx"] = src["Dx"].tolist()
            payload["dx"] = src["dx"].tolist()
        if src["K_pre"] is not None:
            payload["K_pre"] = [m.tolist() for m in src["K_pre"]]
    else:
        payload = {
            "A": game.A.tolist(),
            "B": [b.tolist() for b in game.B],
            "Q": [m.tolist() for m in game.Q],
            "R": [m.tolist() for m in game.R],
            "T": game.T,
            "Ex": game.Ex.tolist(),
            "Eu": [m.tolist() for m in game.Eu],
            "e": game.e.tolist(),
            "Dx": game.Dx.tolist(),
            "dx": game.dx.tolist(),
        }
    if game.meta:
        payload["meta"] = game.meta
    with open(path, "w") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def read_game(path):
    with open(path) as fh:
        payload = json.load(fh)
    meta = payload.get("meta")
    if "Eu" in payload:
        return LqGame(payload["A"], payload["B"], payload["Q"], payload["R"],
                      payload["T"], Ex=payload.get("Ex"), Eu=payload["Eu"],
                      e=payload.get("e"), Dx=payload.get("Dx"),
                      dx=payload.get("dx"), meta=meta)
    return LqGame.from_stage_constraints(
        payload["A"], payload["B"], payload["Q"], payload["R"], payload["T"],
        Du=payload.get("Du"), du=payload.get("du"), Dx=payload.get("Dx"),
        dx=payload.get("dx"), K_pre=payload.get("K_pre"), meta=meta)
