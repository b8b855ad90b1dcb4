"""Receding-horizon closed loop around the compiled game VI.

Each step solves AVI(U_T(x), M, q_x) from a warm start, applies the first
stage col_i(u_i*[0]) to the plant, and warm-starts the next step with the
shifted solution (drop the first stage, append the equilibrium feedback at
the predicted terminal state). Inside the terminal set the shifted sequence
is already the exact solution, so the step degenerates to a single residual
check -- the single-iteration regime visible in the iteration-count logs.
"""

import dataclasses
import json

import numpy as np

from . import solvers
from .avi import Polyhedron, natural_residual, project
from .errors import Infeasible
from .game import in_terminal_set, rollout, unconstrained_ne_sequence

__all__ = ["ClosedLoopTrace", "RhcWorkspace", "shift_warm_start", "rhc_step",
           "simulate", "write_trace_json", "read_trace_json",
           "write_iterations_csv"]


@dataclasses.dataclass
class ClosedLoopTrace:
    """Closed-loop record: states has steps+1 rows, everything else steps."""
    states: np.ndarray
    inputs: np.ndarray
    solver_iterations: list
    residual_at_termination: list
    constraint_margins: list
    statuses: list
    meta: dict

    @property
    def steps(self):
        return self.inputs.shape[0]

    def min_margin(self):
        if not self.constraint_margins or all(m.size == 0 for m in self.constraint_margins):
            return np.inf
        return min(float(np.min(m)) for m in self.constraint_margins if m.size)


class RhcWorkspace:
    """Factorizations shared by every step of one closed-loop run."""

    def __init__(self, compiled, cfg):
        C_template = Polyhedron(compiled.D, compiled.d0)
        self.dr = solvers.DrWorkspace(compiled.M_ol, compiled.splitting, C_template)
        self.resid_engine = self.dr.resid_engine
        self.cfg = cfg


def shift_warm_start(prev, compiled, prev_x):
    """Shift a full-horizon solution one stage and append the terminal
    feedback: per agent (u_i[1], ..., u_i[T-1], K_i x_T) with x_T the
    terminal state predicted from prev_x under prev."""
    game = compiled.game
    prev = np.asarray(prev, dtype=float).ravel()
    x_T = rollout(game, prev_x, prev)[-1]
    out = np.empty_like(prev)
    for i in range(game.N):
        sl = game.agent_slice(i)
        block = prev[sl]
        mi = game.m[i]
        out[sl] = np.concatenate([block[mi:], compiled.riccati.K_ol[i] @ x_T])
    return out


def _step_margins(game, x, u0, x_next):
    """Realized margins of the stage constraints at (x, u[0]) and of the
    state constraints at the successor state."""
    mixed = -(game.Ex @ x + sum(
        game.Eu[i] @ u0[sum(game.m[:i]):sum(game.m[:i + 1])]
        for i in range(game.N)) + game.e)
    state = -(game.Dx @ x_next + game.dx)
    return np.concatenate([mixed, state])


def rhc_step(compiled, x, warm, cfg=None, workspace=None, terminal_shortcut=True):
    """One receding-horizon step: returns (applied first-stage input, report).

    The applied sequence is the feasibility projection of the converged
    iterate (the DR affine update is not feasibility-preserving, so without
    it the plant would see constraint violations of the order of the solver
    tolerance); at convergence the two differ by at most the tolerance.

    With the shortcut enabled, a state inside the terminal set whose warm
    start already meets the residual tolerance returns after exactly one
    residual evaluation; the reported solution and iteration count coincide
    with what a full solve would produce. Raises Infeasible (annotated with
    the state) when U_T(x) is empty.
    """
    cfg = cfg or solvers.SolverConfig()
    x = np.asarray(x, dtype=float).ravel()
    problem = compiled.avi_at(x)
    if workspace is None:
        workspace = RhcWorkspace(compiled, cfg)
    if warm is None:
        warm = np.zeros(problem.dim)
    warm = np.asarray(warm, dtype=float).ravel()
    if terminal_shortcut and in_terminal_set(compiled, x):
        r = natural_residual(problem, warm, engine=workspace.resid_engine)
        if r <= cfg.tol:
            report = solvers.SolverReport(
                solution=warm.copy(), residuals=[r], iterations=1,
                status=solvers.CONVERGED, wall_time=0.0, algorithm="dr")
            return compiled.first_stage(warm), report
    report = solvers.dr_solve(problem, compiled.splitting, cfg, warm=warm,
                              workspace=workspace.dr)
    applied = report.solution
    if not problem.C.contains(applied):
        applied = project(problem.C, applied, engine=workspace.resid_engine)
    return compiled.first_stage(applied), report


def _initial_warm_start(compiled, x0, workspace):
    """Equilibrium feedback rollout, projected onto U_T(x0) if infeasible."""
    u = unconstrained_ne_sequence(compiled, x0)
    C = compiled.polyhedron_at(x0)
    if C.contains(u, tol=1e-12):
        return u
    return project(C, u, engine=workspace.resid_engine)


def simulate(compiled, x0, steps, cfg=None, terminal_shortcut=True):
    """Closed-loop simulation for the given number of steps.

    States propagate through the plant recursion exactly (same arithmetic
    as game.rollout), so a recorded trace replays bit-identically. Raises
    Infeasible annotated with the failing step index.
    """
    cfg = cfg or solvers.SolverConfig()
    game = compiled.game
    x = np.asarray(x0, dtype=float).ravel().copy()
    workspace = RhcWorkspace(compiled, cfg)
    states = np.zeros((steps + 1, game.n))
    inputs = np.zeros((steps, sum(game.m)))
    iterations, residuals, margins, statuses = [], [], [], []
    states[0] = x
    offs = np.concatenate([[0], np.cumsum(game.m)])
    try:
        warm = _initial_warm_start(compiled, x, workspace)
    except Infeasible as exc:
        raise Infeasible(f"initial state infeasible at step 0: {exc}",
                         slack=exc.slack) from exc
    for t in range(steps):
        try:
            u0, report = rhc_step(compiled, x, warm, cfg, workspace,
                                  terminal_shortcut)
        except Infeasible as exc:
            raise Infeasible(f"constraint set empty at step {t}: {exc}",
                             slack=exc.slack) from exc
        x_next = game.A @ x + sum(
            game.B[i] @ u0[offs[i]:offs[i + 1]] for i in range(game.N))
        inputs[t] = u0
        states[t + 1] = x_next
        iterations.append(report.iterations)
        residuals.append(report.final_residual)
        margins.append(_step_margins(game, x, u0, x_next))
        statuses.append(report.status)
        warm = shift_warm_start(report.solution, compiled, x)
        x = x_next
    meta = {
        "horizon": game.T,
        "tol": cfg.tol,
        "max_iter": cfg.max_iter,
        "terminal_shortcut": bool(terminal_shortcut),
    }
    return ClosedLoopTrace(states, inputs, iterations, residuals, margins,
                           statuses, meta)


def write_trace_json(trace, path):
    """Per-step records {t, x, u, iterations, residual, margins} plus meta;
    the terminal state appears as a final record with null input fields."""
    records = []
    for t in range(trace.steps):
        records.append({
            "t": t,
            "x": trace.states[t].tolist(),
            "u": trace.inputs[t].tolist(),
            "iterations": int(trace.solver_iterations[t]),
            "residual": float(trace.residual_at_termination[t]),
            "margins": trace.constraint_margins[t].tolist(),
            "status": trace.statuses[t],
        })
    payload = {
        "meta": trace.meta,
        "steps": records,
        "final_state": trace.states[-1].tolist(),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def read_trace_json(path):
    with open(path) as fh:
        payload = json.load(fh)
    records = payload["steps"]
    steps = len(records)
    if steps == 0:
        raise ValueError("trace has no steps")
    n = len(records[0]["x"])
    states = np.zeros((steps + 1, n))
    inputs = np.zeros((steps, len(records[0]["u"])))
    iterations, residuals, margins, statuses = [], [], [], []
    for t, rec in enumerate(records):
        states[t] = rec["x"]
        inputs[t] = rec["u"]
        iterations.append(int(rec["iterations"]))
        residuals.append(float(rec["residual"]))
        margins.append(np.asarray(rec["margins"], dtype=float))
        statuses.append(rec.get("status", ""))
    states[steps] = payload["final_state"]
    return ClosedLoopTrace(states, inputs, iterations, residuals, margins,
                           statuses, payload.get("meta", {}))


def write_iterations_csv(trace, path):
    with open(path, "w") as fh:
        fh.write("t,iterations\n")
        for t, it in enumerate(trace.solver_iterations):
            fh.write(f"{t},{it}\n")
