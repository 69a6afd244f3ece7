import numpy as np
import pytest

from reduktor.dstoch import compression_many, theta
from reduktor.errors import (
    GridTooCoarseError,
    KernelNormalizationViolation,
    TailBoundExceededError,
    UnsupportedOrderError,
    ValidationFailure,
)
from reduktor.presets import random_model
from reduktor.volterra import (
    ConstantPath,
    Kernel,
    SolverConfig,
    TimeGrid,
    Trajectory,
    derivative_consistency,
    kernel_normalization_residual,
    march_solve,
    march_solve_general,
    neumann_series,
    neumann_series_trajectory,
    poisson_kernel,
    trajectory_to_csv,
)

SYM_M = np.array([[0.5, 0.3, 0.2], [0.3, 0.4, 0.3], [0.2, 0.3, 0.5]])


def constant_truth(m, nu, ts):
    """Closed form for a constant input: exp(nu (M - 1) t) @ M by eigh."""
    w, v = np.linalg.eigh(m)
    out = np.empty((len(ts),) + m.shape)
    for k, t in enumerate(ts):
        out[k] = (v * np.exp(nu * (w - 1.0) * t)) @ v.T @ m
    return out


class TestTimeGrid:
    def test_nodes(self):
        g = TimeGrid(2.0, 4)
        np.testing.assert_allclose(g.nodes, [0.0, 0.5, 1.0, 1.5, 2.0])
        assert g.h == 0.5

    def test_index_of(self):
        g = TimeGrid(2.0, 4)
        assert g.index_of(1.5) == 3
        with pytest.raises(ValueError):
            g.index_of(1.3)

    def test_bad_grid(self):
        with pytest.raises(ValueError):
            TimeGrid(-1.0, 5)
        with pytest.raises(ValueError):
            SolverConfig(nu=-0.5, grid=TimeGrid(1.0, 10))


class TestMarch:
    def test_node_zero_is_identity_for_physical_sources(self, generic_model):
        cfg = SolverConfig(nu=1.0, grid=TimeGrid(1.0, 100))
        traj = march_solve(generic_model.m_path(), cfg)
        np.testing.assert_allclose(traj.values[0], np.eye(generic_model.n), atol=1e-12)

    def test_nu_zero_returns_the_input(self, generic_model):
        cfg = SolverConfig(nu=0.0, grid=TimeGrid(2.0, 200))
        traj = march_solve(generic_model.m_path(), cfg)
        sampled = generic_model.m_many(cfg.grid.nodes)
        np.testing.assert_allclose(traj.values, sampled, atol=1e-13)

    def test_constant_uniform_projector_is_fixed(self):
        # the uniform projector annihilates the generator, so the
        # averaged evolution is constant in time
        th = theta(2).entries
        cfg = SolverConfig(nu=1.0, grid=TimeGrid(5.0, 500))
        traj = march_solve(ConstantPath(th), cfg)
        assert np.abs(traj.values - th).max() < 1e-12

    def test_constant_symmetric_closed_form(self):
        cfg = SolverConfig(nu=1.0, grid=TimeGrid(5.0, 5000))
        traj = march_solve(ConstantPath(SYM_M), cfg)
        truth = constant_truth(SYM_M, 1.0, cfg.grid.nodes)
        assert np.abs(traj.values - truth).max() < 3e-7

    def test_every_node_doubly_stochastic(self, generic_model):
        cfg = SolverConfig(nu=1.5, grid=TimeGrid(4.0, 400))
        traj = march_solve(generic_model.m_path(), cfg)
        sums_r = traj.values.sum(axis=2)
        sums_c = traj.values.sum(axis=1)
        assert np.abs(sums_r - 1.0).max() < 1e-12
        assert np.abs(sums_c - 1.0).max() < 1e-12
        assert traj.values.min() >= 0.0

    def test_compression_bounded_along_trajectory(self, generic_model):
        cfg = SolverConfig(nu=1.0, grid=TimeGrid(6.0, 600))
        traj = march_solve(generic_model.m_path(), cfg)
        assert compression_many(traj.values).max() <= 1.0 + 1e-9

    def test_validation_failure_on_bad_source(self):
        bad = np.array([[0.7, 0.4], [0.4, 0.7]])  # row sums 1.1
        cfg = SolverConfig(nu=1.0, grid=TimeGrid(2.0, 100))
        with pytest.raises(ValidationFailure):
            march_solve(ConstantPath(bad), cfg)

    def test_nu_elimination_rescaling(self, generic_model):
        # solving with (M(t), nu) equals solving with (M(s t), s nu) on the
        # compressed grid, node for node
        path = generic_model.m_path()
        base = march_solve(path, SolverConfig(nu=2.0, grid=TimeGrid(4.0, 800)))

        class Scaled:
            def __call__(self, t):
                return path(2.0 * t)

            def many(self, ts):
                return path.many(2.0 * np.asarray(ts))

            def left(self, t):
                return self(t)

            def right(self, t):
                return self(t)

            def jump_times(self, t0, t1):
                return np.empty(0)

        scaled = march_solve(Scaled(), SolverConfig(nu=4.0, grid=TimeGrid(2.0, 800)))
        assert np.abs(scaled.values - base.values).max() < 1e-8


class TestSeries:
    def test_nu_zero_is_bare_evolution(self, generic_model):
        cfg = SolverConfig(nu=0.0, grid=TimeGrid(2.0, 100))
        res = neumann_series(generic_model.m_path(), cfg, 2.0)
        truth = generic_model.m_many(np.array([2.0]))[0]
        np.testing.assert_allclose(res.value.entries, truth, atol=1e-12)
        assert res.n_terms == 0

    def test_constant_input_closed_form(self):
        cfg = SolverConfig(nu=1.0, grid=TimeGrid(2.0, 2000))
        res = neumann_series(ConstantPath(SYM_M), cfg, 2.0)
        truth = constant_truth(SYM_M, 1.0, np.array([2.0]))[0]
        assert np.abs(res.value.entries - truth).max() < 1e-6

    def test_matches_march(self, generic_model):
        cfg = SolverConfig(nu=1.0, grid=TimeGrid(2.0, 500))
        traj = march_solve(generic_model.m_path(), cfg)
        res = neumann_series(generic_model.m_path(), cfg, 2.0)
        assert np.abs(res.value.entries - traj.final).max() < 1e-6

    def test_truncation_and_grid_guards(self, generic_model):
        with pytest.raises(GridTooCoarseError):
            neumann_series(generic_model.m_path(),
                           SolverConfig(nu=1.0, grid=TimeGrid(2.0, 3)), 2.0)
        with pytest.raises(TailBoundExceededError):
            neumann_series(generic_model.m_path(),
                           SolverConfig(nu=1.0, grid=TimeGrid(2.0, 200), n_max=1), 2.0)

    def test_tail_bound_reported(self, generic_model):
        cfg = SolverConfig(nu=1.0, grid=TimeGrid(2.0, 200))
        res = neumann_series(generic_model.m_path(), cfg, 2.0)
        assert 0.0 <= res.tail_bound <= 1e-10


class TestSchemeConvergence:
    def test_march_order_two_against_closed_form(self):
        errs = []
        for steps in (500, 1000):
            cfg = SolverConfig(nu=1.0, grid=TimeGrid(2.0, steps))
            traj = march_solve(ConstantPath(SYM_M), cfg)
            truth = constant_truth(SYM_M, 1.0, cfg.grid.nodes)
            errs.append(np.abs(traj.values - truth).max())
        assert errs[0] / errs[1] >= 3.5

    def test_march_and_series_share_the_discretization(self, generic_model):
        # both routes apply the same discrete operator, so their gap is
        # the geometric truncation tail, far below the quadrature error,
        # at every resolution
        for steps in (250, 500):
            cfg = SolverConfig(nu=1.0, grid=TimeGrid(2.0, steps))
            traj = march_solve(generic_model.m_path(), cfg)
            series = neumann_series_trajectory(generic_model.m_path(), cfg)
            assert np.abs(series.values - traj.values).max() < 1e-9


class TestGeneralKernel:
    def test_poisson_kernel_reproduces_march(self, generic_model):
        grid = TimeGrid(5.0, 1000)
        march = march_solve(generic_model.m_path(), SolverConfig(nu=1.0, grid=grid))
        gen = march_solve_general(generic_model.m_path(), poisson_kernel(1.0), grid)
        assert np.abs(gen.values - march.values).max() < 1e-10

    def test_trivial_kernel_returns_input(self, generic_model):
        triv = Kernel(a=lambda T: np.ones_like(np.asarray(T, dtype=float)),
                      b=lambda t, T: np.zeros_like(np.asarray(t, dtype=float)))
        grid = TimeGrid(3.0, 300)
        traj = march_solve_general(generic_model.m_path(), triv, grid)
        np.testing.assert_allclose(traj.values, generic_model.m_many(grid.nodes),
                                   atol=1e-12)

    def test_rational_kernel_output_doubly_stochastic(self, generic_model):
        rat = Kernel(a=lambda T: 1.0 / (1.0 + np.asarray(T, dtype=float)),
                     b=lambda t, T: np.ones_like(np.asarray(t, dtype=float)) / (1.0 + T))
        grid = TimeGrid(4.0, 400)
        traj = march_solve_general(generic_model.m_path(), rat, grid)
        assert np.abs(traj.values.sum(axis=2) - 1.0).max() < 1e-12
        assert np.abs(traj.values.sum(axis=1) - 1.0).max() < 1e-12

    def test_broken_kernel_rejected(self, generic_model):
        pk = poisson_kernel(1.0)
        broken = Kernel(a=pk.a, b=lambda t, T: 1.1 * pk.b(t, T))
        with pytest.raises(KernelNormalizationViolation):
            march_solve_general(generic_model.m_path(), broken, TimeGrid(3.0, 300))


class TestKernelNormalization:
    def test_poisson_kernel_residual(self):
        res = kernel_normalization_residual(poisson_kernel(1.0), 3.0, 1000)
        assert res < 1e-8

    def test_trivial_kernel_exact(self):
        triv = Kernel(a=lambda T: np.ones_like(np.asarray(T, dtype=float)),
                      b=lambda t, T: np.zeros_like(np.asarray(t, dtype=float)))
        assert kernel_normalization_residual(triv, 4.0, 100) == 0.0

    def test_broken_kernel_residual_analytic(self):
        pk = poisson_kernel(1.0)
        broken = Kernel(a=pk.a, b=lambda t, T: 1.1 * pk.b(t, T))
        res = kernel_normalization_residual(broken, 3.0, 2000)
        assert res == pytest.approx(0.1 * (1.0 - np.exp(-3.0)), abs=1e-8)


class TestDerivativeConsistency:
    def test_nu_zero_is_exact(self, generic_model):
        cfg = SolverConfig(nu=0.0, grid=TimeGrid(3.0, 300))
        traj = march_solve(generic_model.m_path(), cfg)
        assert derivative_consistency(generic_model.m_path(), traj, cfg) < 1e-4

    def test_generic_model_residual(self, generic_model):
        cfg = SolverConfig(nu=1.0, grid=TimeGrid(3.0, 300))
        traj = march_solve(generic_model.m_path(), cfg)
        assert derivative_consistency(generic_model.m_path(), traj, cfg) < 5e-3

    def test_residual_decays_second_order(self, generic_model):
        res = []
        for steps in (150, 300):
            cfg = SolverConfig(nu=1.0, grid=TimeGrid(3.0, steps))
            traj = march_solve(generic_model.m_path(), cfg)
            res.append(derivative_consistency(generic_model.m_path(), traj, cfg))
        assert res[0] / res[1] >= 3.0

    def test_constant_input(self):
        cfg = SolverConfig(nu=1.0, grid=TimeGrid(3.0, 300))
        traj = march_solve(ConstantPath(SYM_M), cfg)
        assert derivative_consistency(ConstantPath(SYM_M), traj, cfg) < 1e-4

    def test_higher_order_unsupported(self, generic_model):
        cfg = SolverConfig(nu=1.0, grid=TimeGrid(1.0, 50))
        traj = march_solve(generic_model.m_path(), cfg)
        with pytest.raises(UnsupportedOrderError):
            derivative_consistency(generic_model.m_path(), traj, cfg, k=2)


class TestCsv:
    def test_header_and_precision(self):
        grid = TimeGrid(1.0, 2)
        values = np.stack([np.eye(2)] * 3)
        text = trajectory_to_csv(Trajectory(grid=grid, values=values))
        lines = text.strip().split("\n")
        assert lines[0] == "t,entry_0_0,entry_0_1,entry_1_0,entry_1_1"
        assert len(lines) == 4
        # 17 significant digits round-trip
        third = float(lines[2].split(",")[0])
        assert third == 0.5

    def test_roundtrip_full_precision(self, generic_model):
        cfg = SolverConfig(nu=1.0, grid=TimeGrid(1.0, 10))
        traj = march_solve(generic_model.m_path(), cfg)
        text = trajectory_to_csv(traj)
        body = np.array([[float(x) for x in line.split(",")]
                         for line in text.strip().split("\n")[1:]])
        parsed = body[:, 1:].reshape(traj.values.shape)
        np.testing.assert_array_equal(parsed, traj.values)
