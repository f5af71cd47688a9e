import math

import numpy as np
import pytest
import scipy.linalg

from flapkit.errors import (
    InvalidInputError,
    PlanInfeasibleError,
    RankDeficientConstraintsError,
)
from flapkit.planning import (
    BoundaryConditions,
    ConstraintSet,
    CylinderX,
    PlanOptions,
    Sphere,
    Waypoint,
    azimuth_rate,
    build_equality_system,
    case_library,
    constraint_residuals,
    plan,
    sample_times,
    solve_qp_equality,
    solve_qp_equality_full,
)
from flapkit.trajectory import ObjectiveWeights, constant_trajectory, snap_objective


def rest_to_rest(end, T=3.0, segments=1):
    cons = ConstraintSet(boundary=BoundaryConditions(end_pos=end))
    opts = PlanOptions(segments=segments, T=T, restarts=4)
    return cons, opts


class TestSampleTimes:
    def test_published_grid(self):
        # 0.15 s spacing over (0, 3): 19 interior points 0.15 .. 2.85
        tau = sample_times(3.0, 0.15)
        assert len(tau) == 19
        assert tau[0] == pytest.approx(0.15)
        assert tau[-1] == pytest.approx(2.85)

    def test_endpoints_excluded(self):
        tau = sample_times(1.0, 0.25)
        assert np.all(tau > 0.0)
        assert np.all(tau < 1.0)


class TestQpOracle:
    def test_rest_to_rest_boundary_exact(self):
        cons, opts = rest_to_rest([1.0, 0.0, 0.0])
        traj, kkt_residual = solve_qp_equality_full(cons, None, opts)
        assert kkt_residual < 1e-10
        assert np.allclose(traj.eval(0.0), [0, 0, 0], atol=1e-10)
        assert np.allclose(traj.eval(3.0), [1, 0, 0], atol=1e-10)
        for order in (1, 2):
            assert np.allclose(traj.eval(0.0, order), 0.0, atol=1e-10)
            assert np.allclose(traj.eval(3.0, order), 0.0, atol=1e-10)

    def test_stationarity_in_null_space(self):
        # gradient check: projected snap gradient vanishes at the minimizer
        cons, opts = rest_to_rest([1.0, -0.5, 0.25])
        traj, _ = solve_qp_equality_full(cons, None, opts)
        a_mat, _, _ = build_equality_system(cons, opts)
        z = scipy.linalg.null_space(a_mat)
        from flapkit.planning import _snap_block

        q = _snap_block(opts)
        for axis in range(3):
            c = np.concatenate([seg.coeffs[axis] for seg in traj.segments])
            assert np.max(np.abs(z.T @ (2 * q @ c))) < 1e-8

    def test_zero_boundary_gives_zero_polynomial(self):
        cons, opts = rest_to_rest([0.0, 0.0, 0.0])
        traj = solve_qp_equality(cons, None, opts)
        assert np.max(np.abs(traj.segments[0].coeffs)) < 1e-10

    def test_beats_random_feasible_interpolants(self):
        cons, opts = rest_to_rest([1.0, 0.4, -0.3])
        traj, _ = solve_qp_equality_full(cons, None, opts)
        a_mat, _, _ = build_equality_system(cons, opts)
        z = scipy.linalg.null_space(a_mat)
        weights = ObjectiveWeights(mu_p=1.0, mu_v=0.0)
        best = snap_objective(traj, weights)
        rng = np.random.default_rng(11)
        from flapkit.trajectory import PiecewiseTrajectory, PolySegment

        for _ in range(1000):
            coeffs = np.stack([
                np.concatenate([seg.coeffs[axis] for seg in traj.segments])
                + z @ rng.standard_normal(z.shape[1])
                for axis in range(3)
            ])
            other = PiecewiseTrajectory([PolySegment(coeffs, opts.T)])
            assert snap_objective(other, weights) >= best - 1e-9

    def test_rank_deficiency_names_rows(self):
        cons, opts = rest_to_rest([1.0, 0.0, 0.0])
        # waypoint duplicating the start-position boundary row
        cons.waypoints.append(Waypoint(0, 0.0, [0.0, 0.0, 0.0]))
        with pytest.raises(RankDeficientConstraintsError) as err:
            solve_qp_equality(cons, None, opts)
        assert any("waypoint0" in row for row in err.value.rows)

    def test_rejects_velocity_weight(self):
        cons, opts = rest_to_rest([1.0, 0.0, 0.0])
        with pytest.raises(InvalidInputError):
            solve_qp_equality(cons, ObjectiveWeights(mu_p=1.0, mu_v=0.1), opts)


class TestConstraintResiduals:
    def test_stationary_trajectory_all_zero(self):
        traj = constant_trajectory([5.0, 5.0, 5.0], T=3.0)
        cons = ConstraintSet(
            boundary=BoundaryConditions(
                start_pos=[5, 5, 5], end_pos=[5, 5, 5]
            ),
            obstacles=[Sphere(center=[0, 0, 0], radius=0.5)],
        )
        report = constraint_residuals(traj, cons)
        assert report.max_equality < 1e-12
        assert report.max_aggregate == 0.0

    def test_line_through_sphere_penetrates(self):
        # straight x-line passing through a sphere centered at the midpoint
        coeffs = np.zeros((3, 7))
        coeffs[0, 1] = 1.0  # x = t over [0, 3]
        from flapkit.trajectory import single_segment

        traj = single_segment(coeffs, 3.0)
        cons = ConstraintSet(
            boundary=BoundaryConditions(
                end_pos=[3, 0, 0], start_vel=[1, 0, 0], end_vel=[1, 0, 0]
            ),
            obstacles=[Sphere(center=[1.5, 0.0, 0.0], radius=0.5)],
        )
        report = constraint_residuals(traj, cons)
        assert report.obstacles[0] > 0.0
        # worst sample sits near the midpoint
        assert abs(report.worst_sample_time - 1.5) < 0.5

    def test_speed_aggregates(self):
        coeffs = np.zeros((3, 7))
        coeffs[0, 1] = 2.0  # 2 m/s along x exceeds the 1.5 default
        from flapkit.trajectory import single_segment

        traj = single_segment(coeffs, 3.0)
        cons = ConstraintSet(boundary=BoundaryConditions())
        report = constraint_residuals(traj, cons)
        assert report.h_speed == pytest.approx(19 * 0.5)
        assert report.v_speed == 0.0


class TestAzimuthRate:
    def test_circle_rate(self):
        # unit circle at unit angular rate
        t = np.linspace(0, 1, 20)
        vel = np.column_stack([-np.sin(t), np.cos(t), np.zeros_like(t)])
        acc = np.column_stack([-np.cos(t), -np.sin(t), np.zeros_like(t)])
        assert np.allclose(azimuth_rate(vel, acc), 1.0, atol=1e-12)

    def test_floor_below_speed_eps(self):
        vel = np.array([[1e-4, 0.0, 0.0]])
        acc = np.array([[0.0, 1.0, 0.0]])
        # floored denominator: 1e-4 * 1 / 0.05^2 = 0.04
        assert azimuth_rate(vel, acc)[0] == pytest.approx(0.04)


class TestPlan:
    def test_qp_equivalence_without_inequalities(self):
        cons = ConstraintSet(
            boundary=BoundaryConditions(end_pos=[0.4, -0.3, 0.2], end_vel=[0.1, 0, 0])
        )
        opts = PlanOptions(restarts=4, seed=3)
        weights = ObjectiveWeights(mu_p=1.0, mu_v=0.0)
        traj, report = plan(cons, weights, opts)
        qp = solve_qp_equality(cons, None, opts)
        ref = snap_objective(qp, weights)
        assert report.objective == pytest.approx(ref, rel=1e-6)

    def test_determinism_bit_identical(self):
        cons, opts_base = rest_to_rest([1.0, 1.0, 1.0])
        cons.obstacles.append(Sphere(center=[0.5, 0.5, 0.5], radius=0.3))
        cons.v_v_max = 1.0
        results = []
        for _ in range(2):
            opts = PlanOptions(restarts=4, seed=9)
            traj, _ = plan(cons, ObjectiveWeights(), opts)
            results.append(np.stack([seg.coeffs for seg in traj.segments]))
        assert np.array_equal(results[0], results[1])

    def test_translation_equivariance(self):
        shift = np.array([2.0, -1.0, 0.5])
        cons1 = ConstraintSet(
            boundary=BoundaryConditions(end_pos=[1, 1, 1]),
            obstacles=[Sphere(center=[0.5, 0.5, 0.5], radius=0.3)],
            v_v_max=1.0,
        )
        cons2 = ConstraintSet(
            boundary=BoundaryConditions(
                start_pos=shift, end_pos=shift + [1, 1, 1]
            ),
            obstacles=[Sphere(center=shift + [0.5, 0.5, 0.5], radius=0.3)],
            v_v_max=1.0,
        )
        opts = PlanOptions(restarts=4, seed=1)
        traj1, _ = plan(cons1, ObjectiveWeights(), opts)
        traj2, _ = plan(cons2, ObjectiveWeights(), PlanOptions(restarts=4, seed=1))
        times = np.linspace(0, traj1.duration, 40)
        p1 = traj1.eval_many(times, 0)
        p2 = traj2.eval_many(times, 0)
        # equivariant up to the penalty solver's convergence tolerance
        assert np.allclose(p2, p1 + shift, atol=2e-3)
        # objective invariant under rigid translation
        assert snap_objective(traj1, ObjectiveWeights()) == pytest.approx(
            snap_objective(traj2, ObjectiveWeights()), rel=1e-4
        )

    def test_infeasible_reports_worst_residual(self):
        # sphere fully enclosing both endpoints cannot be escaped
        cons = ConstraintSet(
            boundary=BoundaryConditions(end_pos=[0.2, 0.0, 0.0]),
            obstacles=[Sphere(center=[0.1, 0.0, 0.0], radius=2.0)],
        )
        opts = PlanOptions(restarts=2, seed=0, rho_schedule=(1e2, 1e3))
        with pytest.raises(PlanInfeasibleError) as err:
            plan(cons, ObjectiveWeights(), opts)
        assert err.value.worst_residual > 0.1


class TestCaseLibrary:
    def test_case_a_geometry(self):
        cons, opts, _ = case_library("a")
        assert opts.segments == 1
        sphere = cons.obstacles[0]
        assert np.allclose(sphere.center, [0.5, 0.5, 0.5])
        assert sphere.radius == 0.5
        assert np.allclose(cons.boundary.end_pos, [1, 1, 1])

    def test_case_b_geometry(self):
        cons, opts, _ = case_library("b")
        assert opts.segments == 2
        assert np.allclose(cons.boundary.end_pos, [0, 2, 0])
        assert np.allclose(cons.obstacles[0].center_yz, [0.5, -0.2])
        assert np.allclose(cons.obstacles[1].center_yz, [1.5, 0.1])
        assert all(ob.radius == 0.3 for ob in cons.obstacles)

    def test_case_c_waypoints(self):
        cons, opts, _ = case_library("c")
        assert opts.segments == 3
        wp2 = cons.waypoints[0]
        assert wp2.segment == 0 and wp2.t_local == pytest.approx(opts.T / 2)
        assert np.allclose(
            wp2.position,
            [0.3 * math.cos(math.pi / 3), 0.3 * math.sin(math.pi / 3), 0.0],
        )
        assert np.allclose(cons.boundary.start_pos, [1.5, 0, 0])
        assert np.allclose(cons.boundary.end_pos, [1.5, 0, 0])

    def test_case_line_speed(self):
        cons, opts, _ = case_library("line")
        assert np.allclose(cons.boundary.start_vel, [0.5, 0, 0])
        assert np.allclose(cons.boundary.end_pos, [1.5, 0, 0])

    def test_unknown_case(self):
        with pytest.raises(InvalidInputError):
            case_library("z")


class TestPlannedCases:
    def test_case_a_clearance(self, case_a):
        traj = case_a.traj
        tau = sample_times(traj.duration, 0.15)
        assert len(tau) == 19
        dist = np.linalg.norm(traj.eval_many(tau, 0) - [0.5, 0.5, 0.5], axis=1)
        assert dist.min() >= 0.5
        dense = sample_times(traj.duration, 0.015)
        dist_d = np.linalg.norm(traj.eval_many(dense, 0) - [0.5, 0.5, 0.5], axis=1)
        assert dist_d.min() >= 0.45

    def test_case_a_feasibility_invariant(self, case_a):
        assert case_a.report.residuals.max_aggregate <= 1e-6
        assert case_a.report.residuals_dense.max_aggregate <= 1e-3

    def test_case_b_clearance_and_continuity(self, case_b):
        traj = case_b.traj
        dense = sample_times(traj.duration, 0.015)
        pos = traj.eval_many(dense, 0)
        for cyl in case_b.cons.obstacles:
            assert cyl.distance(pos).min() >= 0.3
        assert np.max(traj.continuity_residuals()) < 1e-6

    def test_case_line_is_uniform_speed(self, case_line):
        traj = case_line.traj
        times = np.linspace(0, traj.duration, 30)
        vel = traj.eval_many(times, 1)
        assert np.allclose(vel, [[0.5, 0.0, 0.0]] * 30, atol=1e-8)

    def test_case_c_feasible_and_heading_hot(self, case_c):
        traj = case_c.traj
        assert case_c.report.residuals.max_aggregate <= 1e-6
        dense = sample_times(traj.duration, 0.01)
        vel = traj.eval_many(dense, 1)
        acc = traj.eval_many(dense, 2)
        rate = np.abs(azimuth_rate(vel, acc))
        # fast heading swings concentrate at the outer waypoints (t = 3, 6)
        assert rate.max() > 2.0
        peak_times = dense[rate > 0.8 * rate.max()]
        assert np.any(np.abs(peak_times - 3.0) < 0.5) or np.any(
            np.abs(peak_times - 6.0) < 0.5
        )


class TestObstacles:
    def test_sphere_distance_and_origin_flag(self):
        s = Sphere(center=[1.0, 0.0, 0.0], radius=0.5)
        assert s.distance(np.array([[2.0, 0, 0]]))[0] == pytest.approx(1.0)
        legacy = Sphere(center=[1.0, 0.0, 0.0], radius=0.5, distance_from_origin=True)
        assert legacy.distance(np.array([[2.0, 0, 0]]))[0] == pytest.approx(2.0)

    def test_cylinder_distance_ignores_x(self):
        c = CylinderX(center_yz=[1.0, -1.0], radius=0.3)
        pts = np.array([[100.0, 1.0, -1.0], [-5.0, 1.0, 0.0]])
        assert np.allclose(c.distance(pts), [0.0, 1.0])

    def test_radius_validation(self):
        with pytest.raises(InvalidInputError):
            Sphere(center=[0, 0, 0], radius=0.0)
