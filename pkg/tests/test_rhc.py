import numpy as np
import pytest

from gamevi import game as G
from gamevi import rhc
from gamevi.errors import Infeasible
from gamevi.solvers import SolverConfig

from oracles import simulate_states


def cfg(tol=1e-6, max_iter=2000):
    return SolverConfig(tol=tol, max_iter=max_iter)


# --------------------------------------------------------- shift warm start

def test_shift_of_feedback_sequence_is_feedback_at_next_state(small_game2):
    g, c = small_game2
    rng = np.random.default_rng(0)
    x = 0.1 * rng.normal(size=g.n)
    prev = G.unconstrained_ne_sequence(c, x)
    shifted = rhc.shift_warm_start(prev, c, x)
    x_next = c.riccati.A_cl @ x
    assert np.allclose(shifted, G.unconstrained_ne_sequence(c, x_next), atol=1e-12)


def test_shift_horizon_one_is_pure_feedback():
    one = np.array([[1.0]])
    g = G.LqGame(one, [one], [one], [one], T=1)
    c = G.compile_vi(g)
    prev = np.array([0.4])
    x = np.array([2.0])
    shifted = rhc.shift_warm_start(prev, c, x)
    x1 = g.A @ x + g.B[0] @ prev  # predicted terminal state
    assert np.allclose(shifted, c.riccati.K_ol[0] @ x1)


def test_shift_scalar_hand_computed():
    one = np.array([[1.0]])
    g = G.LqGame(0.5 * one, [one], [one], [one], T=3)
    c = G.compile_vi(g)
    prev = np.array([0.3, -0.2, 0.1])
    x = np.array([1.0])
    # terminal state by hand: x3 = a^3 x + a^2 b u0 + a b u1 + b u2
    a, b = 0.5, 1.0
    x3 = a ** 3 * 1.0 + a * a * b * 0.3 + a * b * (-0.2) + b * 0.1
    k = c.riccati.K_ol[0][0, 0]
    shifted = rhc.shift_warm_start(prev, c, x)
    assert np.allclose(shifted, [-0.2, 0.1, k * x3], atol=1e-12)


# ------------------------------------------------------------------ rhc_step

def test_rhc_step_zero_state(small_game2):
    g, c = small_game2
    u0, report = rhc.rhc_step(c, np.zeros(g.n), None, cfg())
    assert np.allclose(u0, 0.0, atol=1e-9)
    assert report.converged


def test_rhc_step_terminal_shortcut_single_iteration(small_game2):
    g, c = small_game2
    rng = np.random.default_rng(1)
    x = 0.05 * rng.normal(size=g.n)
    assert G.in_terminal_set(c, x)
    warm = G.unconstrained_ne_sequence(c, x)
    u0, report = rhc.rhc_step(c, x, warm, cfg(tol=1e-3))
    assert report.iterations == 1
    assert report.converged
    expected = np.concatenate([c.riccati.K_ol[i] @ x for i in range(g.N)])
    assert np.allclose(u0, expected, atol=1e-9)


def test_rhc_step_shortcut_matches_full_solve(small_game2):
    g, c = small_game2
    rng = np.random.default_rng(2)
    x = 0.05 * rng.normal(size=g.n)
    warm = G.unconstrained_ne_sequence(c, x)
    u_short, _ = rhc.rhc_step(c, x, warm, cfg(tol=1e-6), terminal_shortcut=True)
    u_full, rep_full = rhc.rhc_step(c, x, warm, cfg(tol=1e-6),
                                    terminal_shortcut=False)
    assert rep_full.iterations == 1
    assert np.allclose(u_short, u_full, atol=1e-8)


def test_rhc_step_warm_vs_cold(small_game2):
    """Identical solutions; warm never needs more iterations than cold on
    at least 90 percent of sampled states."""
    g, c = small_game2
    rng = np.random.default_rng(3)
    wins = 0
    total = 10
    for _ in range(total):
        x = rng.normal(size=g.n) * 0.8
        warm = G.unconstrained_ne_sequence(c, x)
        u_w, rep_w = rhc.rhc_step(c, x, warm, cfg())
        u_c, rep_c = rhc.rhc_step(c, x, np.zeros(g.input_dim), cfg())
        assert np.max(np.abs(u_w - u_c)) <= 1e-6 * max(1.0, np.max(np.abs(u_c)))
        if rep_w.iterations <= rep_c.iterations:
            wins += 1
    assert wins >= 0.9 * total


def test_rhc_step_infeasible_raises():
    # x[1] >= 1 unreachable under |u| <= 0.1 from x0 = 0
    one = np.array([[1.0]])
    g = G.LqGame.from_stage_constraints(
        one, [one], [one], [one], T=2,
        Du=[np.array([[1.0], [-1.0]])], du=np.array([-0.1, -0.1]),
        Dx=np.array([[-1.0]]), dx=np.array([1.0]))
    c = G.compile_vi(g)
    with pytest.raises(Infeasible):
        rhc.rhc_step(c, np.zeros(1), None, cfg())


# ------------------------------------------------------------------ simulate

def test_simulate_zero_initial_state(small_game2):
    g, c = small_game2
    trace = rhc.simulate(c, np.zeros(g.n), 10, cfg())
    assert np.allclose(trace.states, 0.0, atol=1e-9)
    assert np.allclose(trace.inputs, 0.0, atol=1e-9)


def test_simulate_terminal_start_matches_feedback_rollout(small_game2):
    g, c = small_game2
    rng = np.random.default_rng(4)
    x0 = 0.05 * rng.normal(size=g.n)
    assert G.in_terminal_set(c, x0)
    steps = 15
    trace = rhc.simulate(c, x0, steps, cfg(tol=1e-3))
    assert all(it == 1 for it in trace.solver_iterations)
    y = x0.copy()
    for t in range(steps + 1):
        assert np.allclose(trace.states[t], y, atol=1e-9)
        y = c.riccati.A_cl @ y
    assert trace.min_margin() > 0.0


def test_simulate_exact_replay(small_game2):
    g, c = small_game2
    rng = np.random.default_rng(5)
    x0 = rng.normal(size=g.n) * 0.5
    trace = rhc.simulate(c, x0, 25, cfg())
    x = x0.copy()
    offs = np.concatenate([[0], np.cumsum(g.m)])
    for t in range(trace.steps):
        u0 = trace.inputs[t]
        x = g.A @ x + sum(g.B[i] @ u0[offs[i]:offs[i + 1]] for i in range(g.N))
        assert np.array_equal(x, trace.states[t + 1])


def test_simulate_terminal_set_absorbing(small_game2):
    g, c = small_game2
    rng = np.random.default_rng(6)
    x0 = rng.normal(size=g.n) * 0.5
    trace = rhc.simulate(c, x0, 40, cfg())
    flags = [G.in_terminal_set(c, trace.states[t]) for t in range(41)]
    if True in flags:
        first = flags.index(True)
        assert all(flags[first:])


def test_simulate_margins_nonnegative_after_convergence(small_game2):
    g, c = small_game2
    rng = np.random.default_rng(7)
    x0 = rng.normal(size=g.n) * 0.5
    trace = rhc.simulate(c, x0, 30, cfg())
    assert all(s == "converged" for s in trace.statuses)
    assert trace.min_margin() >= -1e-9


def test_simulate_flags_iteration_limited_steps(small_game2):
    """A step hitting the iteration cap still applies its best iterate and
    the trace carries the flag."""
    g, c = small_game2
    rng = np.random.default_rng(12)
    x0 = rng.normal(size=g.n) * 0.8
    trace = rhc.simulate(c, x0, 3, cfg(tol=1e-14, max_iter=2))
    assert "iter_limit" in trace.statuses
    assert np.all(np.isfinite(trace.inputs))
    # applied inputs are feasible even for truncated solves
    assert trace.min_margin() >= -1e-8


def test_simulate_infeasible_reports_step_index():
    one = np.array([[1.0]])
    # becomes infeasible once the state drifts past the reachable band
    g = G.LqGame.from_stage_constraints(
        1.2 * one, [one], [one], [one], T=2,
        Du=[np.array([[1.0], [-1.0]])], du=np.array([-0.05, -0.05]),
        Dx=np.array([[1.0]]), dx=np.array([-1.2]))
    c = G.compile_vi(g)
    with pytest.raises(Infeasible) as err:
        rhc.simulate(c, np.array([1.15]), 50, cfg())
    assert "step" in str(err.value)


def test_trace_json_round_trip(tmp_path, small_game2):
    g, c = small_game2
    rng = np.random.default_rng(8)
    x0 = rng.normal(size=g.n) * 0.3
    trace = rhc.simulate(c, x0, 12, cfg())
    path = tmp_path / "trace.json"
    rhc.write_trace_json(trace, path)
    back = rhc.read_trace_json(path)
    assert np.array_equal(back.states, trace.states)
    assert np.array_equal(back.inputs, trace.inputs)
    assert back.solver_iterations == trace.solver_iterations
    assert back.residual_at_termination == trace.residual_at_termination
    for a, b in zip(back.constraint_margins, trace.constraint_margins):
        assert np.array_equal(a, b)


def test_iterations_csv_format(tmp_path, small_game2):
    g, c = small_game2
    trace = rhc.simulate(c, np.zeros(g.n), 5, cfg())
    path = tmp_path / "iters.csv"
    rhc.write_iterations_csv(trace, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "t,iterations"
    assert len(lines) == 6
    assert lines[1].startswith("0,")
