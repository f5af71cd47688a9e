import math

import numpy as np
import pytest

from flapkit.attitude import rotz, wrap_angle
from flapkit.dynamics import (
    ActuatorCommands,
    FwavParams,
    FwavState,
    VerticalParams,
    integrate_vertical_tabulated,
    simulate_full,
    simulate_vertical,
    VerticalInputs,
)
from flapkit.errors import (
    DegenerateHeadingError,
    InfeasibleHeadingAccelerationError,
    NegligibleThrustError,
)
from flapkit.flatness import (
    FlatInputSchedule,
    flat_to_attitude_and_thrust,
    flat_to_full,
    flat_to_vertical,
)
from flapkit.trajectory import FlatSample, single_segment


@pytest.fixture
def vparams():
    return VerticalParams()


def hover_sample():
    return FlatSample(sigma=[0.0, 0.0, 1.0])


class TestFlatToVertical:
    def test_straight_line(self, vparams):
        s = FlatSample(sigma=[0, 0, 0], d1=[1.0, 0.0, 0.0])
        v = flat_to_vertical(s, vparams)
        assert v.psi == pytest.approx(0.0)
        assert np.allclose(v.vv, [1.0, 0.0, 0.0])
        assert v.omega_psi == pytest.approx(0.0)

    def test_analytic_circle(self, vparams):
        # x = cos t, y = sin t: the azimuth rotates at exactly 1 rad/s
        for t in [0.0, 0.7, 2.0, 4.5]:
            s = FlatSample(
                sigma=[math.cos(t), math.sin(t), 0.0],
                d1=[-math.sin(t), math.cos(t), 0.0],
                d2=[-math.cos(t), -math.sin(t), 0.0],
                d3=[math.sin(t), -math.cos(t), 0.0],
            )
            v = flat_to_vertical(s, vparams)
            assert v.omega_psi == pytest.approx(1.0, abs=1e-9)
            assert v.omega_psi_dot == pytest.approx(0.0, abs=1e-9)
            assert v.vv[0] == pytest.approx(1.0, abs=1e-9)
            assert v.vv[1] == pytest.approx(0.0, abs=1e-9)

    def test_vertical_climb_degenerate(self, vparams):
        s = FlatSample(sigma=[0, 0, 0], d1=[0.0, 0.0, 0.5])
        with pytest.raises(DegenerateHeadingError):
            flat_to_vertical(s, vparams)
        # explicit azimuth makes it well-defined
        v = flat_to_vertical(s, vparams, psi=0.3)
        assert v.psi == pytest.approx(0.3)
        assert v.omega_psi == 0.0


class TestFlatToAttitudeAndThrust:
    def test_hover(self, vparams):
        u, _ = flat_to_attitude_and_thrust(hover_sample(), vparams, psi=0.0)
        assert np.allclose(u.gamma, [0, 0, 1], atol=1e-12)
        assert u.f_flap == pytest.approx(vparams.hover_frequency)

    def test_constant_forward_cruise_tilt(self, vparams):
        # closed-form force balance: -Gx/Gz = v_cx / v_cz with
        # v_cx = vk_d_x V^2 / m and v_cz = g
        V = 1.0
        s = FlatSample(sigma=[0, 0, 0], d1=[V, 0.0, 0.0])
        u, _ = flat_to_attitude_and_thrust(s, vparams)
        v_cx = vparams.vk_d_x * V**2 / vparams.m
        assert u.gamma[1] == pytest.approx(0.0, abs=1e-12)
        assert -u.gamma[0] / u.gamma[2] == pytest.approx(v_cx / vparams.g)

    def test_constant_rate_turn_gamma_y(self, vparams):
        # steady turn: yaw row gives Gy = vk_damp w^2 / (vk_gamma vvx^2)
        w, V = 0.8, 1.2
        t = 0.4
        r = V / w
        s = FlatSample(
            sigma=[r * math.sin(w * t), -r * math.cos(w * t), 0.0],
            d1=[V * math.cos(w * t), V * math.sin(w * t), 0.0],
            d2=[-V * w * math.sin(w * t), V * w * math.cos(w * t), 0.0],
            d3=[-V * w**2 * math.cos(w * t), -V * w**2 * math.sin(w * t), 0.0],
        )
        u, vert = flat_to_attitude_and_thrust(s, vparams)
        assert vert.omega_psi == pytest.approx(w, abs=1e-9)
        expected = vparams.vk_damp * w**2 / (vparams.vk_gamma * V**2)
        assert u.gamma[1] == pytest.approx(expected, rel=1e-9)

    def test_infeasible_lateral_tilt(self, vparams):
        # tiny forward speed with a hard yaw acceleration demand
        s = FlatSample(
            sigma=[0, 0, 0],
            d1=[0.06, 0.0, 0.0],
            d2=[0.0, 1.0, 0.0],
            d3=[0.0, 0.0, 0.0],
        )
        with pytest.raises(InfeasibleHeadingAccelerationError):
            flat_to_attitude_and_thrust(s, vparams)

    def test_negligible_thrust(self, vparams):
        # free-fall demand at rest: both force rows vanish
        s = FlatSample(sigma=[0, 0, 0], d2=[0.0, 0.0, -vparams.g])
        with pytest.raises(NegligibleThrustError):
            flat_to_attitude_and_thrust(s, vparams, psi=0.0)

    def test_yaw_shift_equivariance(self, vparams):
        rng = np.random.default_rng(6)
        base = FlatSample(
            sigma=rng.standard_normal(3),
            d1=[0.8, 0.1, 0.05],
            d2=rng.standard_normal(3) * 0.3,
            d3=rng.standard_normal(3) * 0.2,
        )
        u0, v0 = flat_to_attitude_and_thrust(base, vparams)
        for alpha in [0.4, -1.2, 2.9]:
            rot = rotz(alpha)
            shifted = FlatSample(
                sigma=rot @ base.sigma, d1=rot @ base.d1,
                d2=rot @ base.d2, d3=rot @ base.d3,
            )
            u1, v1 = flat_to_attitude_and_thrust(shifted, vparams)
            assert abs(wrap_angle(v1.psi - v0.psi - alpha)) < 1e-9
            assert np.allclose(u1.gamma, u0.gamma, atol=1e-9)
            assert u1.f_flap == pytest.approx(u0.f_flap, rel=1e-12)

    def test_frequency_scales_with_mass(self, vparams):
        # doubling the mass doubles the required f^2 (quadratic thrust law);
        # zero speed so the specific force demand is mass-independent
        s = FlatSample(sigma=[0, 0, 0], d2=[0.2, 0.0, 0.1])
        u1, _ = flat_to_attitude_and_thrust(s, vparams, psi=0.0)
        heavy = VerticalParams(m=2 * vparams.m)
        u2, _ = flat_to_attitude_and_thrust(s, heavy, psi=0.0)
        assert u2.f_flap**2 == pytest.approx(2.0 * u1.f_flap**2, rel=1e-9)
        assert np.allclose(u1.gamma, u2.gamma, atol=1e-12)


def smooth_forward_trajectory(T=1.5, heading=0.0):
    """Gentle forward flight (speed >= 0.45 m/s) with mild climb, heading
    fixed by construction so the full-model round trip stays planar."""
    coeffs = np.zeros((3, 7))
    # s(t) = 0.5 t + 0.08 t^2 - 0.03 t^3 along the heading
    along = np.array([0.0, 0.5, 0.08, -0.03, 0.0, 0.0, 0.0])
    coeffs[0] = math.cos(heading) * along
    coeffs[1] = math.sin(heading) * along
    coeffs[2] = np.array([0.0, 0.0, 0.05, -0.02, 0.0, 0.0, 0.0])
    return single_segment(coeffs, T)


class TestFlatToFull:
    def test_hover_like_slow_cruise_small_deflections(self, vparams):
        traj = smooth_forward_trajectory()
        result = flat_to_full(traj.flat_sample, 0.7, vparams, FwavParams())
        assert abs(result.theta_rud) < 0.05
        assert np.linalg.norm(result.omega) < 0.5
        assert result.f_flap > 10.0

    def test_planar_climb_zero_rudder(self, vparams):
        # x-z plane motion: roll/yaw symmetric, rudder stays zero
        traj = smooth_forward_trajectory(heading=0.0)
        result = flat_to_full(traj.flat_sample, 0.6, vparams, FwavParams())
        assert result.theta_rud == pytest.approx(0.0, abs=1e-8)
        assert result.omega[0] == pytest.approx(0.0, abs=1e-6)
        assert result.omega[2] == pytest.approx(0.0, abs=1e-6)

    def test_pure_climb_with_explicit_azimuth(self, vparams):
        # z-only cubic with the azimuth supplied: upright attitude, zero
        # deflections, zero body rates
        coeffs = np.zeros((3, 7))
        coeffs[2] = [0.0, 0.0, 0.3, -0.05, 0.0, 0.0, 0.0]
        traj = single_segment(coeffs, 2.0)
        result = flat_to_full(traj.flat_sample, 1.0, vparams, FwavParams(), psi=0.0)
        assert np.allclose(result.gamma, [0, 0, 1], atol=1e-9)
        assert result.theta_rud == pytest.approx(0.0, abs=1e-9)
        assert result.theta_ele == pytest.approx(0.0, abs=1e-9)
        assert np.allclose(result.omega, 0.0, atol=1e-9)

    def test_full_model_round_trip(self, vparams):
        # feed recovered actuator histories into the full model; the flown
        # position must reproduce the flat output within 2 cm
        fparams = FwavParams(k_flap_c=1e-3, k_rud_c=1e-3, k_ele_c=1e-3)
        traj = smooth_forward_trajectory()
        seg = traj.segments[0]

        def sample_fn(t):
            # polynomial extrapolates smoothly past the segment ends, which
            # the derivative stencil needs at the boundaries
            return FlatSample(*[seg.eval(t, order) for order in range(5)])

        r0 = flat_to_full(sample_fn, 0.0, vparams, fparams)

        samples = {}

        def commands(t):
            key = round(t, 6)
            if key not in samples:
                r = flat_to_full(sample_fn, t, vparams, fparams)
                samples[key] = ActuatorCommands(r.f_flap, r.theta_rud, r.theta_ele)
            return samples[key]

        from flapkit.simulate import _quat_from_rotation

        state0 = FwavState(
            p=r0.p, v=r0.v, q=_quat_from_rotation(r0.rotation), omega=r0.omega,
            f_flap=r0.f_flap, theta_rud=r0.theta_rud, theta_ele=r0.theta_ele,
        )
        log = simulate_full(state0, fparams, commands, dt=1e-3, duration=traj.duration)
        ref = traj.eval_many(log.t, 0)
        dev = np.linalg.norm(log.states[:, 0:3] - ref, axis=1)
        assert dev.max() < 0.02

    def test_quaternion_sign_continuity(self, vparams):
        traj = smooth_forward_trajectory()
        r = flat_to_full(traj.flat_sample, 0.5, vparams, FwavParams())
        # a previous quaternion near the negated tilt selects s_e = -1
        from flapkit.attitude import tilt_quaternion

        q_prev = tilt_quaternion(r.gamma, -1)
        r2 = flat_to_full(
            traj.flat_sample, 0.5, vparams, FwavParams(), prev_q=q_prev
        )
        assert r2.diagnostics["s_e"] == -1


class TestRoundTripProperty:
    def test_vertical_round_trip_random_headings(self, vparams):
        # feasible flat outputs (azimuth-steady, speed >= 0.45) reintegrate
        # to within 1e-3 m/s of drift per second
        rng = np.random.default_rng(12)
        for trial in range(4):
            heading = rng.uniform(-math.pi, math.pi)
            traj = smooth_forward_trajectory(heading=heading)
            sched = FlatInputSchedule(traj, vparams, min_speed=0.3)
            dt = 1e-4
            n = int(round(traj.duration / dt))
            grid = np.minimum(np.arange(2 * n + 1) * dt / 2, traj.duration)
            gam, f = sched.tabulate(grid)
            log = integrate_vertical_tabulated(
                sched.initial_vertical_state(), vparams, gam, f, dt,
                rudder_mode="explicit-rudder",
            )
            ref = traj.eval_many(log.t[:: 50], 0)
            dev = np.linalg.norm(log.states[:: 50, 0:3] - ref, axis=1)
            assert dev.max() < 1e-3 * traj.duration

    def test_tabulate_matches_pointwise_inputs(self, vparams, case_a):
        sched = FlatInputSchedule(case_a.traj, vparams)
        times = np.linspace(0.0, case_a.traj.duration, 41)
        gam, f = sched.tabulate(times)
        for i, t in enumerate(times):
            u = sched.inputs(float(t))
            assert np.allclose(u.gamma, gam[i], atol=1e-12)
            assert u.f_flap == pytest.approx(float(f[i]), abs=1e-12)

    def test_interior_speed_dip_rejected(self, vparams):
        # out-and-back along x dips through zero speed mid-trajectory
        coeffs = np.zeros((3, 7))
        coeffs[0] = [0.0, 1.0, -0.5, 0.0, 0.0, 0.0, 0.0]  # x = t - t^2/2 on [0,2]
        traj = single_segment(coeffs, 2.0)
        with pytest.raises(DegenerateHeadingError):
            FlatInputSchedule(traj, vparams, min_speed=0.3)

    @pytest.mark.parametrize("rudder_mode", ["explicit-rudder", "gamma-proxy"])
    @pytest.mark.parametrize("lateral_mode", ["constrained", "free"])
    def test_integrator_fast_path_matches_generic(self, rudder_mode, lateral_mode):
        vparams = VerticalParams(lateral_mode=lateral_mode)
        traj = smooth_forward_trajectory()
        sched = FlatInputSchedule(traj, vparams, min_speed=0.3)
        dt = 1e-3
        n = int(round(0.5 / dt))
        grid = np.minimum(np.arange(2 * n + 1) * dt / 2, traj.duration)
        gam, f = sched.tabulate(grid)
        state0 = sched.initial_vertical_state()
        state0.vv[1] = 0.05  # exercise the lateral row
        fast = integrate_vertical_tabulated(
            state0, vparams, gam, f, dt, rudder_mode=rudder_mode,
        )

        def inputs(t):
            idx = min(int(round(2 * t / dt)), len(grid) - 1)
            return VerticalInputs(gamma=gam[idx], f_flap=float(f[idx]))

        slow = simulate_vertical(
            state0, vparams, inputs, rudder_mode=rudder_mode, dt=dt, duration=0.5,
        )
        assert np.max(np.abs(fast.states - slow.states)) < 1e-12
