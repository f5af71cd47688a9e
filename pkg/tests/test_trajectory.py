import numpy as np
import pytest
from scipy.integrate import simpson

from flapkit.errors import InvalidInputError, TrajectoryDomainError
from flapkit.trajectory import (
    FlatSample,
    ObjectiveWeights,
    PiecewiseTrajectory,
    PolySegment,
    constant_trajectory,
    polyval_derivative,
    rec,
    single_segment,
    snap_gram_matrix,
    snap_objective,
)


def axis_poly(coeffs, T=3.0, order=6):
    """One-axis trajectory with the remaining axes zero."""
    full = np.zeros((3, order + 1))
    full[0, : len(coeffs)] = coeffs
    return single_segment(full, T)


class TestEval:
    def test_constant_polynomial(self):
        traj = constant_trajectory([1.0, -2.0, 0.5], T=2.0)
        for t in [0.0, 0.3, 1.7, 2.0]:
            assert np.allclose(traj.eval(t), [1.0, -2.0, 0.5])

    def test_cubic_third_derivative(self):
        traj = axis_poly([0, 0, 0, 1.0])  # t^3
        assert traj.eval(2.0, order=3)[0] == pytest.approx(6.0)

    def test_fourth_derivative_of_cubic_vanishes(self):
        traj = axis_poly([0.3, -1.0, 2.0, 1.5])
        assert np.allclose(traj.eval(1.2, order=4), 0.0)

    def test_domain_error(self):
        traj = constant_trajectory([0, 0, 0], T=1.0)
        with pytest.raises(TrajectoryDomainError):
            traj.eval(1.5)
        with pytest.raises(TrajectoryDomainError):
            traj.eval(-0.1)

    def test_junction_resolves_to_later_segment(self):
        seg1 = PolySegment(np.array([[0.0, 1.0], [0, 0], [0, 0]]), T=1.0)
        seg2 = PolySegment(np.array([[1.0, -1.0], [0, 0], [0, 0]]), T=1.0)
        traj = PiecewiseTrajectory([seg1, seg2])
        idx, t_local = traj.locate(1.0)
        assert idx == 1 and t_local == 0.0
        # velocity at the junction comes from the later segment
        assert traj.eval(1.0, order=1)[0] == pytest.approx(-1.0)

    def test_eval_many_matches_pointwise(self):
        rng = np.random.default_rng(2)
        segs = [PolySegment(rng.standard_normal((3, 7)), T=1.5) for _ in range(3)]
        traj = PiecewiseTrajectory(segs)
        times = rng.uniform(0, traj.duration, 50)
        for order in range(5):
            batch = traj.eval_many(times, order)
            single = np.array([traj.eval(float(t), order) for t in times])
            assert np.allclose(batch, single, atol=1e-12)


class TestSnapObjective:
    def test_cubic_has_zero_snap(self):
        traj = axis_poly([0.5, 1.0, -2.0, 0.7])
        assert snap_objective(traj, ObjectiveWeights(mu_p=1.0, mu_v=0.0)) == 0.0

    def test_unit_snap_quartic(self):
        # sigma = t^4/24 on one axis, T = 1: fourth derivative is 1
        traj = axis_poly([0, 0, 0, 0, 1.0 / 24.0], T=1.0)
        assert snap_objective(traj, ObjectiveWeights(mu_p=1.0, mu_v=0.0)) == pytest.approx(1.0)

    def test_closed_form_matches_dense_quadrature(self):
        # oracle: 1e4-point Simpson quadrature of the squared 4th derivative
        rng = np.random.default_rng(7)
        for _ in range(5):
            coeffs = rng.standard_normal((3, 7))
            T = rng.uniform(0.5, 4.0)
            traj = single_segment(coeffs, T)
            t = np.linspace(0.0, T, 10_001)
            snap = np.array([polyval_derivative(coeffs[axis], t, 4) for axis in range(3)])
            oracle = simpson(np.sum(snap**2, axis=0), x=t)
            closed = snap_objective(traj, ObjectiveWeights(mu_p=1.0, mu_v=0.0))
            assert closed == pytest.approx(oracle, abs=1e-8 * max(1.0, abs(oracle)))

    def test_velocity_term_matches_dense_quadrature(self):
        rng = np.random.default_rng(8)
        coeffs = rng.standard_normal((3, 7)) * 0.5
        T = 2.0
        traj = single_segment(coeffs, T)
        t = np.linspace(0.0, T, 20_001)
        vel = np.array([polyval_derivative(coeffs[axis], t, 1) for axis in range(3)])
        oracle = simpson(np.sum(np.abs(vel), axis=0), x=t)
        value = snap_objective(traj, ObjectiveWeights(mu_p=1.0, mu_v=1.0))
        assert value - snap_objective(traj, ObjectiveWeights(mu_p=1.0, mu_v=0.0)) \
            == pytest.approx(oracle, rel=1e-4)

    def test_gram_matrix_zero_below_fourth_order(self):
        q = snap_gram_matrix(7, 2.0)
        assert np.allclose(q[:4, :], 0.0)
        assert np.allclose(q[:, :4], 0.0)


class TestRec:
    @pytest.mark.parametrize("x,expected", [(-1.0, 0.0), (2.0, 2.0), (0.0, 0.0)])
    def test_scalar(self, x, expected):
        assert rec(x) == expected

    def test_vectorized(self):
        assert np.allclose(rec(np.array([-3.0, 0.0, 0.25])), [0.0, 0.0, 0.25])


class TestCsv:
    def test_coeff_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        traj = PiecewiseTrajectory(
            [PolySegment(rng.standard_normal((3, 7)), T=3.0) for _ in range(2)]
        )
        path = tmp_path / "traj.csv"
        traj.to_coeff_csv(path)
        back = PiecewiseTrajectory.from_coeff_csv(path)
        assert back.M == 2
        for s0, s1 in zip(traj.segments, back.segments):
            assert np.array_equal(s0.coeffs, s1.coeffs)
            assert s0.T == s1.T

    def test_sampled_csv_header(self, tmp_path):
        traj = constant_trajectory([0, 0, 0], T=1.0)
        path = tmp_path / "sampled.csv"
        traj.to_sampled_csv(path, dt=0.25)
        lines = path.read_text().splitlines()
        assert lines[0] == "t,x,y,z,vx,vy,vz,ax,ay,az,jx,jy,jz,sx,sy,sz"
        assert len(lines) == 2 + 4  # header + samples at 0, .25, .5, .75, 1.0


class TestValidation:
    def test_flat_sample_requires_finite_3vectors(self):
        with pytest.raises(InvalidInputError):
            FlatSample(sigma=[np.inf, 0, 0])
        with pytest.raises(InvalidInputError):
            FlatSample(sigma=[0, 0])

    def test_segment_duration_positive(self):
        with pytest.raises(InvalidInputError):
            PolySegment(np.zeros((3, 7)), T=0.0)

    def test_weights_validation(self):
        with pytest.raises(InvalidInputError):
            ObjectiveWeights(mu_p=0.0)
        with pytest.raises(InvalidInputError):
            ObjectiveWeights(mu_v=-0.1)

    def test_continuity_residuals_zero_for_smooth_join(self):
        import math

        # second segment built to match value and first three derivatives
        rng = np.random.default_rng(4)
        seg1 = PolySegment(rng.standard_normal((3, 7)), T=1.0)
        coeffs2 = np.zeros((3, 7))
        for axis in range(3):
            for order in range(4):
                val = polyval_derivative(seg1.coeffs[axis], 1.0, order)
                coeffs2[axis, order] = val / math.factorial(order)
        traj = PiecewiseTrajectory([seg1, PolySegment(coeffs2, T=1.0)])
        assert np.max(traj.continuity_residuals()) < 1e-12
