"""Differential-flatness map: flat outputs -> states and physical inputs.

Given a flat output sigma(t) = (x, y, z) with derivatives through 4th order,
the chain recovers, in order:

1. the azimuth psi from the horizontal velocity direction, its rate and
   acceleration analytically from the polynomial derivatives, and the
   vertical-frame velocity/acceleration by exact differentiation of the
   frame transform;
2. the tilt components and flapping frequency by inverting the forward and
   vertical force rows together with the wind-vane yaw row, using the unit
   norm of the reduced attitude and f >= 0 to disambiguate;
3. the full rotation R(t) = Rz(psi) R_e(Gamma), body rates by differencing
   the analytically evaluated R(t), and the rudder/elevator deflections by
   inverting the x- and y-rows of the torque model (the yaw row is treated
   as negligible).

Everything below the azimuth floor ``V_EPS`` is degenerate: the heading is
not defined by the velocity and the caller must supply it explicitly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .attitude import (
    angular_velocity_from_rotation,
    recover_attitude,
    rotz,
    tilt_quaternion,
    wrap_angle,
)
from .dynamics import FwavParams, VerticalParams, sgn
from .errors import (
    DegenerateHeadingError,
    InfeasibleHeadingAccelerationError,
    NegligibleThrustError,
    UnrecoverableDeflectionError,
)
from .trajectory import FlatSample, PiecewiseTrajectory

V_EPS = 0.05  # m/s, horizontal-speed floor for a defined azimuth
F_EPS = 1.0  # Hz, flapping-frequency validity floor


@dataclass
class VerticalFlatState:
    """Vertical-frame kinematics recovered from one flat sample."""

    vv: np.ndarray
    psi: float
    omega_psi: float
    vv_dot: np.ndarray
    omega_psi_dot: float


@dataclass
class FlatInputs:
    gamma: np.ndarray
    f_flap: float


@dataclass
class FlatStateResult:
    """Full state and inputs recovered from the flat output at one instant."""

    p: np.ndarray
    v: np.ndarray
    gamma: np.ndarray
    psi: float
    omega_psi: float
    vv: np.ndarray
    vv_dot: np.ndarray
    rotation: np.ndarray
    omega: np.ndarray  # body frame
    omega_dot: np.ndarray
    f_flap: float
    theta_rud: float
    theta_ele: float
    diagnostics: dict


def _frame_spin(omega_psi: float) -> np.ndarray:
    return np.array([[0.0, -omega_psi, 0.0], [omega_psi, 0.0, 0.0], [0.0, 0.0, 0.0]])


def flat_to_vertical(
    sample: FlatSample,
    params: VerticalParams,
    psi: float | None = None,
) -> VerticalFlatState:
    """Azimuth and vertical-frame velocity/acceleration of a flat sample.

    The azimuth is the horizontal velocity direction (psi = 0 points along
    +X).  Below the speed floor the azimuth is undefined and the caller must
    pass ``psi`` explicitly, which freezes the frame (zero azimuth rate).
    """
    vel = sample.d1
    acc = sample.d2
    jerk = sample.d3
    h2 = vel[0] ** 2 + vel[1] ** 2

    if h2 < V_EPS**2:
        if psi is None:
            raise DegenerateHeadingError(
                f"horizontal speed {math.sqrt(h2):.4f} m/s below {V_EPS}; "
                "supply the azimuth explicitly"
            )
        psi_val, psi_dot, psi_ddot = float(psi), 0.0, 0.0
    else:
        psi_val = math.atan2(vel[1], vel[0])
        num = vel[0] * acc[1] - vel[1] * acc[0]
        psi_dot = num / h2
        num_dot = vel[0] * jerk[1] - vel[1] * jerk[0]
        h2_dot = 2.0 * (vel[0] * acc[0] + vel[1] * acc[1])
        psi_ddot = (num_dot * h2 - num * h2_dot) / h2**2

    rot_t = rotz(psi_val).T
    vv = rot_t @ vel
    vv_dot = rot_t @ acc - psi_dot * (_frame_spin(1.0) @ vv)
    return VerticalFlatState(
        vv=vv, psi=wrap_angle(psi_val), omega_psi=psi_dot, vv_dot=vv_dot,
        omega_psi_dot=psi_ddot,
    )


def _force_rows(sample: FlatSample, params: VerticalParams, vert: VerticalFlatState):
    """Forward/vertical force rows solved for f^2*Gx and f^2*Gz."""
    m = params.m
    vvx, vvy, vvz = vert.vv
    w = vert.omega_psi
    f2_gx = -(vert.vv_dot[0] + params.vk_d_x * float(sgn(vvx)) * vvx**2 / m + w * vvy) \
        * m / params.k_tf
    f2_gz = (vert.vv_dot[2] + params.vk_d_z * float(sgn(vvz)) * vvz**2 / m + params.g) \
        * m / params.k_tf
    return f2_gx, f2_gz


def _vane_gain(params: VerticalParams, vvx: float) -> float:
    return params.vk_gamma * float(sgn(vvx)) * vvx**2


def _yaw_demand(params: VerticalParams, vert: VerticalFlatState) -> float:
    w = vert.omega_psi
    return vert.omega_psi_dot + params.vk_damp * float(sgn(w)) * w**2


def _resolve_inputs(f2_gx: float, f2_gz: float, gy: float) -> FlatInputs:
    """Flapping frequency and unit tilt from the recovered products."""
    if abs(gy) > 1.0:
        raise InfeasibleHeadingAccelerationError(
            f"|Gamma_y| = {abs(gy):.3f} exceeds 1"
        )
    f4 = (f2_gx**2 + f2_gz**2) / (1.0 - gy**2)
    f2 = math.sqrt(f4)
    if f2 <= F_EPS**2:
        raise NegligibleThrustError(
            f"recovered f^2 = {f2:.3f} Hz^2 at or below the {F_EPS} Hz floor"
        )
    gamma = np.array([f2_gx / f2, gy, f2_gz / f2])
    gamma /= np.linalg.norm(gamma)
    return FlatInputs(gamma=gamma, f_flap=math.sqrt(f2))


def flat_to_attitude_and_thrust(
    sample: FlatSample,
    params: VerticalParams,
    psi: float | None = None,
    vertical: VerticalFlatState | None = None,
) -> tuple[FlatInputs, VerticalFlatState]:
    """Reduced attitude and flapping frequency for one flat sample.

    Inverts the forward/vertical force rows for f^2*Gx and f^2*Gz, the
    wind-vane yaw row for Gy, then resolves f from the unit-norm condition
    with f >= 0.
    """
    vert = vertical if vertical is not None else flat_to_vertical(sample, params, psi)
    f2_gx, f2_gz = _force_rows(sample, params, vert)

    # wind-vane yaw row solved for Gy; at negligible forward speed the gain
    # vanishes and only a zero-rate demand is recoverable
    vane_gain = _vane_gain(params, vert.vv[0])
    yaw_demand = _yaw_demand(params, vert)
    if abs(vane_gain) < params.vk_gamma * V_EPS**2:
        if abs(yaw_demand) > 1e-9:
            raise InfeasibleHeadingAccelerationError(
                "yaw acceleration demanded with no wind-vane authority"
            )
        gy = 0.0
    else:
        gy = yaw_demand / vane_gain
    return _resolve_inputs(f2_gx, f2_gz, gy), vert


def flat_to_full(
    sample_fn: Callable[[float], FlatSample],
    t: float,
    vparams: VerticalParams,
    fparams: FwavParams,
    psi: float | None = None,
    prev_q=None,
    h: float = 1e-4,
) -> FlatStateResult:
    """Full state and all three inputs at time t of a flat trajectory.

    ``sample_fn`` must evaluate the flat output at arbitrary times near t;
    body rates come from differencing the analytically evaluated rotation.
    The tilt-quaternion sign follows the previous quaternion when given
    (dot-product continuity test), else +1.
    """
    sample = sample_fn(t)
    inputs, vert = flat_to_attitude_and_thrust(sample, vparams, psi)

    def rotation_at(t_eval: float) -> np.ndarray:
        s = sample_fn(t_eval)
        u, v = flat_to_attitude_and_thrust(s, vparams, psi)
        return recover_attitude(u.gamma, v.psi)

    rots = [rotation_at(t + k * h) for k in (-2, -1, 0, 1, 2)]
    rot = rots[2]

    def body_rate(r_mid, r_minus, r_plus) -> np.ndarray:
        r_dot = (r_plus - r_minus) / (2.0 * h)
        omega_spatial = angular_velocity_from_rotation(r_mid, r_dot, sym_tol=np.inf)
        return r_mid.T @ omega_spatial

    omega = body_rate(rots[2], rots[1], rots[3])
    omega_minus = body_rate(rots[1], rots[0], rots[2])
    omega_plus = body_rate(rots[3], rots[2], rots[4])
    omega_dot = (omega_plus - omega_minus) / (2.0 * h)

    # torque inversion: x-row gives the rudder, y-row the elevator
    tau = fparams.J @ omega_dot + np.cross(omega, fparams.J @ omega)
    v_body = rot.T @ sample.d1
    sv = float(sgn(v_body[2])) * v_body[0] ** 2
    f2 = inputs.f_flap**2
    gain_x = fparams.k_tau_x * sv + fparams.k_flap_x * f2
    gain_y = fparams.k_tau_y * sv + fparams.k_flap_y * f2
    if abs(gain_x) < 1e-12 or abs(gain_y) < 1e-12:
        raise UnrecoverableDeflectionError("deflection torque gain vanished")
    theta_rud = -tau[0] / gain_x
    theta_ele = -tau[1] / gain_y

    s_e = 1
    if prev_q is not None:
        q_plus = tilt_quaternion(inputs.gamma, 1)
        if float(q_plus.as_array() @ prev_q.as_array()) < 0.0:
            s_e = -1

    return FlatStateResult(
        p=sample.sigma,
        v=sample.d1,
        gamma=inputs.gamma,
        psi=vert.psi,
        omega_psi=vert.omega_psi,
        vv=vert.vv,
        vv_dot=vert.vv_dot,
        rotation=rot,
        omega=omega,
        omega_dot=omega_dot,
        f_flap=inputs.f_flap,
        theta_rud=theta_rud,
        theta_ele=theta_ele,
        diagnostics={
            "s_e": s_e,
            "f_squared": f2,
            "one_minus_gamma_y_sq": 1.0 - inputs.gamma[1] ** 2,
        },
    )


def dump_flat_states(
    traj: PiecewiseTrajectory,
    vparams: VerticalParams,
    fparams: FwavParams,
    path,
    dt: float = 0.01,
) -> int:
    """Write recovered full states along a trajectory to CSV.

    Uses the dynamics state-log schema extended with the azimuth, azimuth
    rate, and reduced-attitude columns.  Rows cover the span where the
    azimuth is defined by the velocity; returns the number of rows written.
    """
    from .attitude import split_azimuth, tilt_quaternion, UnitQuaternion
    from .dynamics import FULL_LOG_HEADER

    sched = FlatInputSchedule(traj, vparams)
    h = 1e-4
    times = np.arange(sched.t_lo + 2 * h, sched.t_hi - 2 * h, dt)
    rows = []
    for t in times:
        r = flat_to_full(sched.sample, float(t), vparams, fparams)
        psi, gamma = split_azimuth(r.rotation)
        half = psi / 2.0
        yaw_q = UnitQuaternion(math.cos(half), np.array([0.0, 0.0, math.sin(half)]))
        q = yaw_q.multiply(tilt_quaternion(gamma)).normalized()
        rows.append([
            t, *r.p, *r.v, *q.as_array(), *r.omega,
            r.f_flap, r.theta_rud, r.theta_ele,
            r.psi, r.omega_psi, *r.gamma,
        ])
    header = FULL_LOG_HEADER + ",psi,omegapsi,gx,gy,gz"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(f"{x:.12g}" for x in row) + "\n")
    return len(rows)


class FlatInputSchedule:
    """Reduced-attitude/frequency schedule along a flat trajectory.

    The azimuth is defined by the velocity only above ``min_speed``.  On
    the slow launch window [0, t_lo) the schedule supplies the azimuth
    explicitly as a constant-rate ramp that back-extrapolates the first
    valid azimuth and azimuth rate, so frame angle and rate are both
    continuous at t_lo; the trailing window (t_hi, end] continues the last
    valid azimuth at its exit rate.  In those windows the lateral tilt only
    compensates the yaw damping (zero where the wind vane has no
    authority), which matches what the model can actually do at low speed.

    Interior dips below ``min_speed`` are rejected: there the heading is
    dynamically significant and no explicit-azimuth policy is faithful.
    """

    def __init__(
        self,
        traj: PiecewiseTrajectory,
        params: VerticalParams,
        min_speed: float = 0.3,
        scan_dt: float = 1e-3,
    ):
        self.traj = traj
        self.params = params
        self.min_speed = max(min_speed, V_EPS)
        grid = np.minimum(np.arange(0.0, traj.duration + scan_dt / 2, scan_dt), traj.duration)
        vel = traj.eval_many(grid, 1)
        speed = np.hypot(vel[:, 0], vel[:, 1])
        valid = speed >= self.min_speed
        if not np.any(valid):
            raise DegenerateHeadingError(
                "trajectory never reaches the azimuth-defining speed"
            )
        first, last = int(np.argmax(valid)), int(len(valid) - 1 - np.argmax(valid[::-1]))
        if not np.all(valid[first : last + 1]):
            bad = grid[first:last + 1][~valid[first:last + 1]]
            raise DegenerateHeadingError(
                f"horizontal speed dips below {self.min_speed} m/s inside the"
                f" valid span (first at t={bad[0]:.3f} s)"
            )
        self.t_lo = float(grid[first])
        self.t_hi = float(grid[last])
        lo = flat_to_vertical(self.traj.flat_sample(self.t_lo), params)
        hi = flat_to_vertical(self.traj.flat_sample(self.t_hi), params)
        self._psi_lo, self._rate_lo = lo.psi, lo.omega_psi
        self._psi_hi, self._rate_hi = hi.psi, hi.omega_psi

    def sample(self, t: float) -> FlatSample:
        return self.traj.flat_sample(min(max(t, 0.0), self.traj.duration))

    def _ramp(self, t: float) -> tuple[float, float]:
        """Explicit azimuth and rate on the degenerate windows."""
        if t < self.t_lo:
            return self._psi_lo - self._rate_lo * (self.t_lo - t), self._rate_lo
        return self._psi_hi + self._rate_hi * (t - self.t_hi), self._rate_hi

    def vertical_state_of(self, t: float) -> VerticalFlatState:
        sample = self.sample(t)
        if self.t_lo <= t <= self.t_hi:
            return flat_to_vertical(sample, self.params)
        psi, rate = self._ramp(t)
        rot_t = rotz(psi).T
        vv = rot_t @ sample.d1
        return VerticalFlatState(
            vv=vv,
            psi=wrap_angle(psi),
            omega_psi=rate,
            vv_dot=rot_t @ sample.d2 - rate * (_frame_spin(1.0) @ vv),
            omega_psi_dot=0.0,
        )

    def inputs(self, t: float) -> FlatInputs:
        sample = self.sample(t)
        vert = self.vertical_state_of(t)
        if self.t_lo <= t <= self.t_hi:
            u, _ = flat_to_attitude_and_thrust(sample, self.params, vertical=vert)
            return u
        # degenerate window: lateral tilt only cancels yaw damping so the
        # frame rate stays at the ramp rate; no authority means no tilt
        f2_gx, f2_gz = _force_rows(sample, self.params, vert)
        vane = _vane_gain(self.params, vert.vv[0])
        demand = _yaw_demand(self.params, vert)
        gy = demand / vane if abs(vane) >= self.params.vk_gamma * V_EPS**2 else 0.0
        return _resolve_inputs(f2_gx, f2_gz, gy)

    def initial_vertical_state(self):
        from .dynamics import VerticalState

        vert = self.vertical_state_of(0.0)
        sample = self.sample(0.0)
        return VerticalState(
            p=sample.sigma.copy(),
            vv=vert.vv.copy(),
            psi=vert.psi,
            omega_psi=vert.omega_psi,
        )

    def tabulate(self, times: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized (gamma, f_flap) over a time grid.

        Same chain as ``inputs`` evaluated with array arithmetic; used to
        precompute dense input schedules for fixed-step integration.
        """
        times = np.asarray(times, dtype=float)
        vel = self.traj.eval_many(times, 1)
        acc = self.traj.eval_many(times, 2)
        jerk = self.traj.eval_many(times, 3)
        n = times.size
        inside = (times >= self.t_lo) & (times <= self.t_hi)

        psi = np.empty(n)
        rate = np.empty(n)
        rate_dot = np.zeros(n)
        h2 = vel[:, 0] ** 2 + vel[:, 1] ** 2
        psi[inside] = np.arctan2(vel[inside, 1], vel[inside, 0])
        num = vel[:, 0] * acc[:, 1] - vel[:, 1] * acc[:, 0]
        rate[inside] = num[inside] / h2[inside]
        num_dot = vel[:, 0] * jerk[:, 1] - vel[:, 1] * jerk[:, 0]
        h2_dot = 2.0 * (vel[:, 0] * acc[:, 0] + vel[:, 1] * acc[:, 1])
        rate_dot[inside] = (
            num_dot[inside] * h2[inside] - num[inside] * h2_dot[inside]
        ) / h2[inside] ** 2

        lead = times < self.t_lo
        psi[lead] = self._psi_lo - self._rate_lo * (self.t_lo - times[lead])
        rate[lead] = self._rate_lo
        trail = times > self.t_hi
        psi[trail] = self._psi_hi + self._rate_hi * (times[trail] - self.t_hi)
        rate[trail] = self._rate_hi

        c, s = np.cos(psi), np.sin(psi)
        vvx = c * vel[:, 0] + s * vel[:, 1]
        vvy = -s * vel[:, 0] + c * vel[:, 1]
        vvz = vel[:, 2]
        avx = c * acc[:, 0] + s * acc[:, 1] + rate * vvy
        avz = acc[:, 2]

        m, k_tf = self.params.m, self.params.k_tf
        f2_gx = -(avx + self.params.vk_d_x * np.sign(vvx) * vvx**2 / m + rate * vvy) * m / k_tf
        f2_gz = (avz + self.params.vk_d_z * np.sign(vvz) * vvz**2 / m + self.params.g) * m / k_tf

        vane = self.params.vk_gamma * np.sign(vvx) * vvx**2
        demand = rate_dot + self.params.vk_damp * np.sign(rate) * rate**2
        authority = np.abs(vane) >= self.params.vk_gamma * V_EPS**2
        gy = np.where(authority, demand / np.where(authority, vane, 1.0), 0.0)
        if np.any(np.abs(gy) > 1.0):
            worst = float(np.max(np.abs(gy)))
            raise InfeasibleHeadingAccelerationError(
                f"|Gamma_y| reaches {worst:.3f} along the schedule"
            )
        f2 = np.sqrt((f2_gx**2 + f2_gz**2) / (1.0 - gy**2))
        if np.any(f2 <= F_EPS**2):
            raise NegligibleThrustError("schedule dips below the frequency floor")
        gamma = np.column_stack([f2_gx / f2, gy, f2_gz / f2])
        gamma /= np.linalg.norm(gamma, axis=1, keepdims=True)
        return gamma, np.sqrt(f2)
