import numpy as np
import pytest
from scipy.special import expit

from malibo.optim import (
    Adam,
    AdamConfig,
    LbfgsConfig,
    adam_minimize,
    finite_difference_gradient,
    lbfgs_minimize,
    strong_wolfe,
    WOLFE_C1,
    WOLFE_C2,
)


class TestFiniteDifferences:
    def test_half_squared_norm(self):
        p = np.array([1.0, -2.0, 0.5])
        fd = finite_difference_gradient(lambda x: 0.5 * float(x @ x), p)
        np.testing.assert_allclose(fd, p, atol=1e-8)

    def test_sigmoid_slope_at_zero(self):
        fd = finite_difference_gradient(lambda x: float(expit(x[0])), np.zeros(1))
        assert fd[0] == pytest.approx(0.25, abs=1e-9)


class TestAdam:
    def test_reaches_quadratic_optimum(self):
        c = np.array([1.0, -2.0, 3.0, 0.25])
        x = adam_minimize(lambda p: (float(np.sum((p - c) ** 2)), 2 * (p - c)),
                          np.zeros(4), AdamConfig(lr=1e-2, decay_per_epoch=1.0),
                          epochs=500, steps_per_epoch=5)
        assert np.linalg.norm(x - c) < 1e-3

    def test_decay_one_keeps_lr_constant(self):
        cfg = AdamConfig(lr=0.05, decay_per_epoch=1.0)
        assert cfg.lr_at_epoch(0) == cfg.lr_at_epoch(100) == 0.05

    def test_decay_schedule(self):
        cfg = AdamConfig(lr=1e-3, decay_per_epoch=0.999)
        assert cfg.lr_at_epoch(3) == pytest.approx(1e-3 * 0.999**3)

    def test_deterministic_trajectory(self):
        def fg(p):
            return float(np.sum(p**4)), 4 * p**3

        runs = []
        for _ in range(2):
            opt = Adam(3, AdamConfig(lr=1e-2))
            x = np.array([1.0, -1.0, 0.5])
            traj = []
            for _ in range(50):
                _, g = fg(x)
                x = opt.step(x, g)
                traj.append(x.copy())
            runs.append(np.asarray(traj))
        np.testing.assert_array_equal(runs[0], runs[1])  # bitwise

    def test_divergence_reports_epoch(self):
        from malibo.optim import DivergenceError

        def fg(p):
            return float(np.exp(p[0])), np.exp(p)  # explodes under ascent

        with pytest.raises(DivergenceError) as err:
            adam_minimize(lambda p: (np.inf, p), np.zeros(1), epochs=3)
        assert err.value.epoch == 0


def quadratic_problem(seed, dim=10):
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(dim, dim))
    a = m @ m.T + dim * np.eye(dim)  # SPD, well conditioned
    b = rng.normal(size=dim)

    def fg(z):
        return 0.5 * float(z @ a @ z) - float(b @ z), a @ z - b

    return fg, a, b


class TestLbfgs:
    def test_spd_quadratic_matches_linear_solve(self):
        for seed in range(10):
            fg, a, b = quadratic_problem(seed)
            result = lbfgs_minimize(fg, np.zeros(10),
                                    LbfgsConfig(max_iter=60, tol_change=1e-13))
            expected = np.linalg.solve(a, b)  # independent oracle
            assert np.linalg.norm(result.x - expected) < 1e-6

    def test_spd_quadratic_default_config_near_optimum(self):
        # the task-adaptation defaults stop on value change; precision is
        # looser but still far below any acquisition-relevant scale
        fg, a, b = quadratic_problem(0)
        result = lbfgs_minimize(fg, np.zeros(10))
        assert np.linalg.norm(result.x - np.linalg.solve(a, b)) < 1e-4

    def test_already_optimal_start(self):
        fg, a, b = quadratic_problem(1)
        z_star = np.linalg.solve(a, b)
        result = lbfgs_minimize(fg, z_star)
        assert result.converged
        np.testing.assert_allclose(result.x, z_star)

    def test_rosenbrock(self):
        def fg(z):
            x, y = z
            f = (1 - x) ** 2 + 100 * (y - x**2) ** 2
            g = np.array([-2 * (1 - x) - 400 * x * (y - x**2), 200 * (y - x**2)])
            return float(f), g

        cfg = LbfgsConfig(max_iter=200)
        result = lbfgs_minimize(fg, np.array([-1.2, 1.0]), cfg)
        assert result.fun < 1e-8
        np.testing.assert_allclose(result.x, [1.0, 1.0], atol=1e-3)

    def test_never_increases_objective(self):
        rng = np.random.default_rng(3)
        for seed in range(20):
            fg, _, _ = quadratic_problem(seed + 100, dim=6)
            z0 = rng.normal(size=6) * 5
            result = lbfgs_minimize(fg, z0, LbfgsConfig(max_iter=3))
            assert result.fun <= fg(z0)[0] + 1e-12

    def test_logistic_map_style_objective(self):
        # weighted-BCE-shaped objective, the actual use in task adaptation
        rng = np.random.default_rng(9)
        phi = rng.normal(size=(30, 5))
        w = np.abs(rng.normal(size=30))

        def fg(z):
            s = phi @ z
            p = expit(s)
            f = 0.5 * z @ z + np.sum(w * np.logaddexp(0, -s) + np.logaddexp(0, s))
            g = z + phi.T @ ((w + 1) * p - w)
            return float(f), g

        result = lbfgs_minimize(fg, np.zeros(5), LbfgsConfig(max_iter=60, tol_change=1e-13))
        assert result.grad_norm < 1e-6


class TestStrongWolfe:
    def test_conditions_hold_at_accepted_steps(self):
        rng = np.random.default_rng(5)
        for seed in range(30):
            fg, _, _ = quadratic_problem(seed, dim=4)
            x = rng.normal(size=4) * 2
            f0, g0 = fg(x)
            direction = -g0
            alpha, f_new, g_new, ok = strong_wolfe(fg, x, direction, f0, g0)
            assert ok
            dg0 = g0 @ direction
            assert f_new <= f0 + WOLFE_C1 * alpha * dg0 + 1e-12  # sufficient decrease
            assert abs(g_new @ direction) <= WOLFE_C2 * abs(dg0) + 1e-12  # curvature

    def test_nonsmooth_valley_still_decreases(self):
        def fg(z):
            return float(np.sum(np.abs(z))), np.sign(z)

        x = np.array([2.0, -3.0])
        f0, g0 = fg(x)
        alpha, f_new, _, _ = strong_wolfe(fg, x, -g0, f0, g0)
        assert f_new <= f0
