"""Closed-loop simulation harness.

Wires a planned trajectory into the tracking controller against either
dynamics model (controller ticks with zero-order hold between ticks), plus
the two certification simulations used by the stability checks:

* the ideal positional loop, where the acceleration expectation is enforced
  exactly (the premise of the positional stability claim), and
* the hybrid heading loop alone, for jump-decrease checks at hysteresis
  flips.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .attitude import recover_attitude, rotz, split_azimuth, quat_to_rot, wrap_angle
from .control import (
    CONTROL_LOG_HEADER,
    ControllerGains,
    Measurement,
    SecondOrderFilter,
    TrackingController,
    TrackingErrors,
    gamma_y_command,
    heading_rate_command,
    hysteresis_update,
    lyapunov_monitors,
)
from .dynamics import (
    ActuatorCommands,
    FwavParams,
    FwavState,
    FullLog,
    VerticalInputs,
    VerticalLog,
    VerticalParams,
    VerticalState,
    full_rhs,
    rk4_step,
    vertical_rhs,
    _renormalize_quat,
    _write_csv,
)
from .errors import InvalidInputError, PropagationError
from .flatness import V_EPS
from .trajectory import PiecewiseTrajectory

E3 = np.array([0.0, 0.0, 1.0])

# The deflection-torque model produces torque opposite the deflection sign,
# while the inner attitude law assumes torque along its command.  The full-
# model harness bridges the two conventions here, exactly like setting servo
# polarity on the bench.
DEFLECTION_POLARITY = -1.0


def initial_heading(traj: PiecewiseTrajectory, scan_dt: float = 1e-2) -> float:
    """Azimuth at the first instant the reference moves fast enough."""
    grid = np.minimum(np.arange(0.0, traj.duration + scan_dt / 2, scan_dt), traj.duration)
    vel = traj.eval_many(grid, 1)
    speed = np.hypot(vel[:, 0], vel[:, 1])
    idx = np.flatnonzero(speed >= V_EPS)
    if idx.size == 0:
        return 0.0
    return float(math.atan2(vel[idx[0], 1], vel[idx[0], 0]))


@dataclass
class ClosedLoopResult:
    """State and controller logs of one run plus discrete-event records."""

    state_log: VerticalLog | FullLog
    control_t: np.ndarray
    control_rows: np.ndarray
    jump_times: list[float]
    ff_sat_times: list[float]
    diverged: bool
    abort_time: float | None = None

    def control_to_csv(self, path) -> None:
        rows = np.column_stack([self.control_t, self.control_rows])
        _write_csv(path, CONTROL_LOG_HEADER, rows)

    def jump_episodes(self, gap: float = 0.5) -> int:
        """Count hysteresis-jump episodes, merging events closer than gap."""
        count = 0
        last = -math.inf
        for t in self.jump_times:
            if t - last > gap:
                count += 1
            last = t
        return count


def run_closed_loop(
    traj: PiecewiseTrajectory,
    model: str = "vertical",
    vparams: VerticalParams | None = None,
    fparams: FwavParams | None = None,
    gains: ControllerGains | None = None,
    dt: float = 1e-3,
    rate_hz: float = 100.0,
    duration: float | None = None,
    perturb_pos=(0.0, 0.0, 0.0),
    perturb_vel=(0.0, 0.0, 0.0),
    divergence_radius: float = 100.0,
) -> ClosedLoopResult:
    """Track a planned trajectory in closed loop.

    The vehicle starts on the (possibly perturbed) reference with the
    reference heading.  The controller runs at rate_hz with zero-order hold;
    the plant integrates at dt.  A position norm beyond divergence_radius
    aborts the run and flags the result instead of raising.
    """
    vparams = vparams or VerticalParams()
    gains = gains or ControllerGains()
    duration = duration if duration is not None else traj.duration
    sub = 1.0 / (rate_hz * dt)
    if abs(sub - round(sub)) > 1e-9:
        raise InvalidInputError(
            f"dt={dt} must divide the controller period {1.0 / rate_hz}"
        )
    n_sub = max(int(round(sub)), 1)
    n_steps = int(round(duration / dt))

    psi0 = initial_heading(traj)
    p0 = traj.eval(0.0) + np.asarray(perturb_pos, dtype=float)
    v0 = traj.eval(0.0, 1) + np.asarray(perturb_vel, dtype=float)
    controller = TrackingController(gains, vparams, rate_hz=rate_hz, initial_psi_d=psi0)

    if model == "vertical":
        state = VerticalState(p=p0, vv=rotz(psi0).T @ v0, psi=psi0)
        return _run_vertical(traj, controller, state, vparams, dt, n_steps, n_sub,
                             divergence_radius)
    if model == "full":
        fparams = fparams or FwavParams()
        state = FwavState(
            p=p0, v=v0,
            q=_quat_from_rotation(recover_attitude(E3, psi0)),
            f_flap=fparams.hover_frequency,
        )
        return _run_full(traj, controller, state, fparams, dt, n_steps, n_sub,
                         divergence_radius)
    raise InvalidInputError(f"unknown model {model!r}")


def _quat_from_rotation(rot: np.ndarray):
    from .attitude import UnitQuaternion, tilt_quaternion

    psi, gamma = split_azimuth(rot)
    half = psi / 2.0
    yaw_q = UnitQuaternion(math.cos(half), np.array([0.0, 0.0, math.sin(half)]))
    return yaw_q.multiply(tilt_quaternion(gamma)).normalized()


def _reference(traj: PiecewiseTrajectory, t: float):
    t_ref = min(t, traj.duration)
    return traj.eval(t_ref, 0), traj.eval(t_ref, 1)


def _run_vertical(traj, controller, state, vparams, dt, n_steps, n_sub, radius):
    t_log = np.empty(n_steps + 1)
    s_log = np.empty((n_steps + 1, 8))
    u_log = np.empty((n_steps + 1, 4))
    control_t, control_rows = [], []
    jump_times, sat_times = [], []
    diverged, abort_time = False, None

    y = state.as_vector()
    gamma_cmd = np.array([0.0, 0.0, 1.0])
    f_cmd = vparams.hover_frequency
    t_log[0] = 0.0
    s_log[0] = y
    u_log[0] = [*gamma_cmd, f_cmd]
    last = 0

    for k in range(n_steps):
        t = k * dt
        if k % n_sub == 0:
            st = VerticalState.from_vector(y)
            sigma_r, sigma_r_dot = _reference(traj, t)
            meas = Measurement(
                p=st.p, v=st.v_inertial, psi=st.psi, omega_psi=st.omega_psi,
                gamma=gamma_cmd, omega=np.array([0.0, 0.0, st.omega_psi]),
            )
            out = controller.update(sigma_r, sigma_r_dot, meas)
            gamma_cmd, f_cmd = out.gamma_cmd, out.f_flap_cmd
            control_t.append(t)
            control_rows.append(out.log_row(t)[1:])
            if out.jumped:
                jump_times.append(t)
            if out.ff_saturated:
                sat_times.append(t)

        inputs = VerticalInputs(gamma=gamma_cmd, f_flap=f_cmd)

        def rhs(tt, yy):
            return vertical_rhs(VerticalState.from_vector(yy), inputs, vparams)

        y = rk4_step(rhs, t, y, dt)
        t_log[k + 1] = (k + 1) * dt
        s_log[k + 1] = y
        u_log[k + 1] = [*gamma_cmd, f_cmd]
        last = k + 1
        if np.linalg.norm(y[0:3]) > radius or not np.all(np.isfinite(y)):
            diverged, abort_time = True, (k + 1) * dt
            break

    n = last + 1
    return ClosedLoopResult(
        state_log=VerticalLog(t_log[:n], s_log[:n], u_log[:n]),
        control_t=np.array(control_t),
        control_rows=np.array(control_rows),
        jump_times=jump_times,
        ff_sat_times=sat_times,
        diverged=diverged,
        abort_time=abort_time,
    )


def _run_full(traj, controller, state, fparams, dt, n_steps, n_sub, radius):
    t_log = np.empty(n_steps + 1)
    s_log = np.empty((n_steps + 1, 16))
    control_t, control_rows = [], []
    jump_times, sat_times = [], []
    diverged, abort_time = False, None

    y = state.as_vector()
    cmd = ActuatorCommands(f_flap_c=fparams.hover_frequency)
    t_log[0] = 0.0
    s_log[0] = y
    last = 0

    for k in range(n_steps):
        t = k * dt
        if k % n_sub == 0:
            st = FwavState.from_vector(y)
            rot = quat_to_rot(st.q.normalized())
            psi, gamma = split_azimuth(rot)
            sigma_r, sigma_r_dot = _reference(traj, t)
            meas = Measurement(
                p=st.p, v=st.v, psi=psi,
                omega_psi=float((rot @ st.omega)[2]),
                gamma=gamma, omega=st.omega,
            )
            out = controller.update(sigma_r, sigma_r_dot, meas)
            cmd = ActuatorCommands(
                f_flap_c=out.f_flap_cmd,
                theta_rud_c=DEFLECTION_POLARITY * out.theta_rud_cmd,
                theta_ele_c=DEFLECTION_POLARITY * out.theta_ele_cmd,
            )
            control_t.append(t)
            control_rows.append(out.log_row(t)[1:])
            if out.jumped:
                jump_times.append(t)
            if out.ff_saturated:
                sat_times.append(t)

        def rhs(tt, yy):
            return full_rhs(FwavState.from_vector(yy), cmd, fparams)

        try:
            y = _renormalize_quat(rk4_step(rhs, t, y, dt))
        except PropagationError:
            diverged, abort_time = True, (k + 1) * dt
            break
        t_log[k + 1] = (k + 1) * dt
        s_log[k + 1] = y
        last = k + 1
        if np.linalg.norm(y[0:3]) > radius or not np.all(np.isfinite(y)):
            diverged, abort_time = True, (k + 1) * dt
            break

    n = last + 1
    return ClosedLoopResult(
        state_log=FullLog(t_log[:n], s_log[:n]),
        control_t=np.array(control_t),
        control_rows=np.array(control_rows),
        jump_times=jump_times,
        ff_sat_times=sat_times,
        diverged=diverged,
        abort_time=abort_time,
    )


# ---------------------------------------------------------------------------
# certification simulations
# ---------------------------------------------------------------------------


@dataclass
class IdealLoopResult:
    t: np.ndarray
    e_p: np.ndarray
    e_v: np.ndarray
    V1: np.ndarray


def simulate_ideal_positional(
    gains: ControllerGains,
    p0,
    v0,
    reference=None,
    dt: float = 2e-3,
    duration: float = 20.0,
    stop_when_ep_below: float | None = None,
) -> IdealLoopResult:
    """Positional loop with the acceleration expectation enforced exactly.

    The desired-velocity derivative is evaluated analytically (no filter),
    so the candidate-function decrease holds to integration accuracy.  The
    reference defaults to hovering at the origin; otherwise pass a callable
    t -> (sigma_r, sigma_r_dot, sigma_r_ddot).
    """
    kp, kv = gains.kp, gains.kv
    if reference is None:
        reference = lambda t: (np.zeros(3), np.zeros(3), np.zeros(3))

    def rhs(t, y):
        p, v = y[0:3], y[3:6]
        sigma, sigma_dot, sigma_ddot = reference(t)
        e_p = sigma - p
        e_p_dot = sigma_dot - v
        v_d_dot = sigma_ddot + kp / np.cosh(e_p) ** 2 * e_p_dot
        e_v = sigma_dot + kp * np.tanh(e_p) - v
        a_d = v_d_dot + kv / kp * np.tanh(e_p) + kv * np.tanh(e_v)
        return np.concatenate([v, a_d])

    n_steps = int(round(duration / dt))
    y = np.concatenate([np.asarray(p0, dtype=float), np.asarray(v0, dtype=float)])
    times, eps, evs, v1s = [0.0], [], [], []

    def record(t, y):
        sigma, sigma_dot, _ = reference(t)
        e_p = sigma - y[0:3]
        e_v = sigma_dot + kp * np.tanh(e_p) - y[3:6]
        eps.append(e_p)
        evs.append(e_v)
        v1s.append(0.5 * float(e_p @ (e_p / kp)) + 0.5 * float(e_v @ (e_v / kv)))

    record(0.0, y)
    for k in range(n_steps):
        y = rk4_step(rhs, k * dt, y, dt)
        t = (k + 1) * dt
        times.append(t)
        record(t, y)
        if stop_when_ep_below is not None and np.linalg.norm(eps[-1]) < stop_when_ep_below:
            break

    return IdealLoopResult(
        t=np.array(times), e_p=np.array(eps), e_v=np.array(evs), V1=np.array(v1s)
    )


@dataclass
class IdealVerticalResult:
    t: np.ndarray
    e_p: np.ndarray
    V1: np.ndarray
    psi: np.ndarray
    omega_psi: np.ndarray
    jump_count: int


def simulate_ideal_vertical(
    gains: ControllerGains,
    p0,
    v0,
    psi0: float = 0.0,
    omega0: float = 0.0,
    psi_d: float = 0.0,
    l_gain: float | None = None,
    reference=None,
    dt: float = 2e-3,
    rate_hz: float = 100.0,
    duration: float = 20.0,
    stop_when_ep_below: float | None = None,
) -> IdealVerticalResult:
    """Vertical-model closed loop with the ideal inner loop.

    Positional subsystem evolves under the exactly-enforced acceleration
    expectation (analytic desired-velocity derivative); the heading
    subsystem runs the hybrid law against the lumped yaw gain with the
    lateral tilt applied directly.  The reference defaults to hovering at
    the origin with a fixed desired azimuth.
    """
    if l_gain is None:
        l_gain = math.sqrt(gains.l_gamma_min * gains.l_gamma_max)
    if reference is None:
        reference = lambda t: (np.zeros(3), np.zeros(3), np.zeros(3))
    kp, kv = gains.kp, gains.kv
    n_sub = max(int(round(1.0 / (rate_hz * dt))), 1)
    n_steps = int(round(duration / dt))

    h = 1
    wd_filter = SecondOrderFilter(gains.filter_wn, gains.filter_zeta, 1.0 / rate_hz, 1)
    gamma_yd = 0.0
    jump_count = 0

    y = np.concatenate([
        np.asarray(p0, dtype=float), np.asarray(v0, dtype=float), [psi0, omega0]
    ])

    def rhs(t, state):
        p, v = state[0:3], state[3:6]
        sigma, sigma_dot, sigma_ddot = reference(t)
        e_p = sigma - p
        e_p_dot = sigma_dot - v
        v_d_dot = sigma_ddot + kp / np.cosh(e_p) ** 2 * e_p_dot
        e_v = sigma_dot + kp * np.tanh(e_p) - v
        a_d = v_d_dot + kv / kp * np.tanh(e_p) + kv * np.tanh(e_v)
        return np.concatenate([v, a_d, [state[7], -l_gain * gamma_yd]])

    times = [0.0]
    eps, v1s, psis, omegas = [], [], [], []

    def record(t, state):
        sigma, sigma_dot, _ = reference(t)
        e_p = sigma - state[0:3]
        e_v = sigma_dot + kp * np.tanh(e_p) - state[3:6]
        eps.append(e_p)
        v1s.append(0.5 * float(e_p @ (e_p / kp)) + 0.5 * float(e_v @ (e_v / kv)))
        psis.append(state[6])
        omegas.append(state[7])

    record(0.0, y)
    for k in range(n_steps):
        t = k * dt
        if k % n_sub == 0:
            delta_psi = wrap_angle(psi_d - y[6])
            h_new = hysteresis_update(h, delta_psi, gains.delta)
            if h_new != h and math.cos(delta_psi) <= 0.0:
                jump_count += 1
            h = h_new
            omega_psi_d = heading_rate_command(
                delta_psi, 0.0, h, gains.k_psi, gains.psi_rate_ff_cap
            )
            _, wd_rate = wd_filter.update(omega_psi_d)
            gamma_yd = gamma_y_command(
                omega_psi_d - y[7], delta_psi, h, float(wd_rate[0]), gains
            )
        y = rk4_step(rhs, t, y, dt)
        times.append((k + 1) * dt)
        record((k + 1) * dt, y)
        if stop_when_ep_below is not None and np.linalg.norm(eps[-1]) < stop_when_ep_below:
            break

    return IdealVerticalResult(
        t=np.array(times), e_p=np.array(eps), V1=np.array(v1s),
        psi=np.array(psis), omega_psi=np.array(omegas), jump_count=jump_count,
    )


@dataclass
class HeadingJumpEvent:
    t: float
    v2_before: float
    v2_after: float
    omega_psi: float


@dataclass
class HeadingLoopResult:
    t: np.ndarray
    psi: np.ndarray
    omega_psi: np.ndarray
    delta_psi: np.ndarray
    V2: np.ndarray
    jumps: list[HeadingJumpEvent]


def simulate_heading_loop(
    gains: ControllerGains,
    psi_d_fn,
    l_gain: float | None = None,
    psi0: float = 0.0,
    omega0: float = 0.0,
    dt: float = 1e-3,
    rate_hz: float = 100.0,
    duration: float = 10.0,
) -> HeadingLoopResult:
    """Hybrid heading subsystem alone: psi' = w, w' = -l * gamma_yd.

    The lateral-tilt command is applied un-normalized (the ideal inner
    loop of the heading analysis); the control gain l defaults to the
    geometric mean of its bounds.  Records the candidate function before
    and after every hysteresis jump.
    """
    if l_gain is None:
        l_gain = math.sqrt(gains.l_gamma_min * gains.l_gamma_max)
    n_sub = max(int(round(1.0 / (rate_hz * dt))), 1)
    n_steps = int(round(duration / dt))

    h = 1
    wd_filter = SecondOrderFilter(gains.filter_wn, gains.filter_zeta, 1.0 / rate_hz, 1)
    gamma_yd = 0.0
    psi, w = float(psi0), float(omega0)
    times, psis, ws, dpsis, v2s = [0.0], [psi], [w], [], []
    jumps: list[HeadingJumpEvent] = []

    def v2_of(h_val, delta_psi, omega_psi_d, omega_psi):
        errors = TrackingErrors(delta_psi=delta_psi, e_omega_psi=omega_psi_d - omega_psi)
        return lyapunov_monitors(errors, h_val, gains, omega_psi=omega_psi).V2

    dpsis.append(wrap_angle(psi_d_fn(0.0) - psi))
    v2s.append(v2_of(h, dpsis[0], heading_rate_command(dpsis[0], 0.0, h, gains.k_psi,
                                                       gains.psi_rate_ff_cap), w))

    for k in range(n_steps):
        t = k * dt
        if k % n_sub == 0:
            psi_d = psi_d_fn(t)
            delta_psi = wrap_angle(psi_d - psi)
            h_new = hysteresis_update(h, delta_psi, gains.delta)
            if h_new != h and math.cos(delta_psi) <= 0.0:
                w_d_before = heading_rate_command(
                    delta_psi, 0.0, h, gains.k_psi, gains.psi_rate_ff_cap
                )
                w_d_after = heading_rate_command(
                    delta_psi, 0.0, h_new, gains.k_psi, gains.psi_rate_ff_cap
                )
                jumps.append(HeadingJumpEvent(
                    t=t,
                    v2_before=v2_of(h, delta_psi, w_d_before, w),
                    v2_after=v2_of(h_new, delta_psi, w_d_after, w),
                    omega_psi=w,
                ))
            h = h_new
            omega_psi_d = heading_rate_command(
                delta_psi, 0.0, h, gains.k_psi, gains.psi_rate_ff_cap
            )
            if jumps and jumps[-1].t == t:
                wd_filter.reset(omega_psi_d)
            _, wd_rate = wd_filter.update(omega_psi_d)
            gamma_yd = gamma_y_command(
                omega_psi_d - w, delta_psi, h, float(wd_rate[0]), gains
            )

        # flow: psi' = w, w' = -l * gamma_yd (zero-order-hold input)
        k1 = (w, -l_gain * gamma_yd)
        k2 = (w + 0.5 * dt * k1[1], -l_gain * gamma_yd)
        k3 = (w + 0.5 * dt * k2[1], -l_gain * gamma_yd)
        k4 = (w + dt * k3[1], -l_gain * gamma_yd)
        psi += dt / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        w += dt / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])

        t_next = (k + 1) * dt
        times.append(t_next)
        psis.append(psi)
        ws.append(w)
        delta_psi = wrap_angle(psi_d_fn(t_next) - psi)
        dpsis.append(delta_psi)
        omega_psi_d = heading_rate_command(delta_psi, 0.0, h, gains.k_psi,
                                           gains.psi_rate_ff_cap)
        v2s.append(v2_of(h, delta_psi, omega_psi_d, w))

    return HeadingLoopResult(
        t=np.array(times), psi=np.array(psis), omega_psi=np.array(ws),
        delta_psi=np.array(dpsis), V2=np.array(v2s), jumps=jumps,
    )
