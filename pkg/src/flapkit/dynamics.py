"""Rigid-body and vertical-frame flight dynamics with fixed-step integrators.

Two models are provided:

* the full 16-state model (position, velocity, unit quaternion, body rates,
  flapping frequency, rudder and elevator deflections) driven by commanded
  actuator values through first-order lags, and
* the simplified vertical-frame model (position, vertical-frame velocity,
  azimuth and azimuth rate) driven directly by the reduced attitude and the
  flapping frequency.

Thrust is quadratic in flapping frequency, drag is componentwise quadratic
with sign, and the deflection torque combines a velocity-induced and a
flapping-induced gain on each axis.  sgn(0) is taken as 0 everywhere so that
rest states are exact equilibria.

Both right-hand sides are pure functions; the integrators are classical
fixed-step RK4 with quaternion renormalization after every step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .attitude import UnitQuaternion, quat_derivative, quat_to_rot, rotz
from .errors import InvalidInputError, PropagationError

FULL_LOG_HEADER = (
    "t,px,py,pz,vx,vy,vz,qw,qx,qy,qz,wx,wy,wz,fflap,thrud,thele"
)
VERTICAL_LOG_HEADER = "t,px,py,pz,vvx,vvy,vvz,psi,omegapsi,gx,gy,gz,fflap"

GRAVITY = 9.81


def sgn(x):
    """Signum with sgn(0) = 0 (continuous extension at rest)."""
    return np.sign(x)


# ---------------------------------------------------------------------------
# parameter and state containers
# ---------------------------------------------------------------------------


@dataclass
class FwavParams:
    """Physical coefficients of the full model (SI units).

    The numeric defaults are nominal bench values for a 29 g vehicle; none of
    them come from identified hardware, so treat them as placeholders to be
    replaced by measured coefficients.
    """

    m: float = 0.029
    g: float = GRAVITY
    J: np.ndarray = field(
        default_factory=lambda: np.diag([8.0e-5, 6.0e-5, 9.0e-5])
    )
    k_tf: float = 1.25e-3
    k_d_x: float = 0.0174
    k_d_y: float = 0.030
    k_d_z: float = 0.004
    k_tau_x: float = 2.0e-4
    k_tau_y: float = 2.5e-4
    k_tau_z: float = 2.0e-5
    k_flap_x: float = 4.0e-5
    k_flap_y: float = 5.0e-5
    k_flap_z: float = 4.0e-6
    k_flap_c: float = 0.10
    k_rud_c: float = 0.05
    k_ele_c: float = 0.05

    def __post_init__(self):
        self.J = np.asarray(self.J, dtype=float)
        if min(self.m, self.g, self.k_tf, self.k_flap_c, self.k_rud_c, self.k_ele_c) <= 0:
            raise InvalidInputError("m, g, k_tf and time constants must be positive")
        if self.J.shape != (3, 3) or not np.allclose(self.J, self.J.T, atol=1e-12):
            raise InvalidInputError("inertia matrix must be symmetric 3x3")
        if np.any(np.linalg.eigvalsh(self.J) <= 0):
            raise InvalidInputError("inertia matrix must be positive definite")
        if min(self.k_d_x, self.k_d_y, self.k_d_z) < 0:
            raise InvalidInputError("drag coefficients must be non-negative")

    @property
    def hover_frequency(self) -> float:
        return math.sqrt(self.m * self.g / self.k_tf)


@dataclass
class FwavState:
    """Full model state; p, v inertial, omega body frame."""

    p: np.ndarray = field(default_factory=lambda: np.zeros(3))
    v: np.ndarray = field(default_factory=lambda: np.zeros(3))
    q: UnitQuaternion = field(default_factory=UnitQuaternion.identity)
    omega: np.ndarray = field(default_factory=lambda: np.zeros(3))
    f_flap: float = 0.0
    theta_rud: float = 0.0
    theta_ele: float = 0.0

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        self.omega = np.asarray(self.omega, dtype=float)
        if self.f_flap < 0:
            raise InvalidInputError("flapping frequency must be non-negative")

    def as_vector(self) -> np.ndarray:
        return np.concatenate([
            self.p, self.v, self.q.as_array(), self.omega,
            [self.f_flap, self.theta_rud, self.theta_ele],
        ])

    @classmethod
    def from_vector(cls, y: np.ndarray) -> "FwavState":
        return cls(
            p=y[0:3].copy(), v=y[3:6].copy(),
            q=UnitQuaternion.from_array(y[6:10]),
            omega=y[10:13].copy(),
            f_flap=float(y[13]), theta_rud=float(y[14]), theta_ele=float(y[15]),
        )


@dataclass
class VerticalParams:
    """Coefficients of the simplified vertical-frame model.

    ``vk_tau_x``/``vk_flap_x`` drive the explicit rudder yaw torque;
    ``kbar_gamma``/``kbar_flap_x`` are the lumped gains of the tilt-proxy
    yaw torque, whose effective control gain is bounded by
    [l_gamma_min, l_gamma_max].  ``lateral_mode`` selects how the frame's
    lateral velocity is treated: "constrained" enforces vv_y == const (the
    non-holonomic idealization the flatness map relies on) while "free"
    integrates the relaxed lateral dynamics.
    """

    m: float = 0.029
    g: float = GRAVITY
    k_tf: float = 1.25e-3
    vk_d_x: float = 0.0174
    vk_d_y: float = 0.030
    vk_d_z: float = 0.004
    vk_gamma: float = 20.0
    vk_damp: float = 0.4
    vk_tau_x: float = 0.5
    vk_flap_x: float = 0.02
    kbar_gamma: float = 0.5
    kbar_flap_x: float = 0.06
    l_gamma_min: float = 5.0
    l_gamma_max: float = 25.0
    lateral_mode: str = "constrained"

    def __post_init__(self):
        if min(self.m, self.g, self.k_tf) <= 0:
            raise InvalidInputError("m, g, k_tf must be positive")
        if not 0 < self.l_gamma_min <= self.l_gamma_max:
            raise InvalidInputError("need 0 < l_gamma_min <= l_gamma_max")
        coeffs = (
            self.vk_d_x, self.vk_d_y, self.vk_d_z, self.vk_gamma, self.vk_damp,
            self.vk_tau_x, self.vk_flap_x, self.kbar_gamma, self.kbar_flap_x,
        )
        if min(coeffs) < 0:
            raise InvalidInputError("model coefficients must be non-negative")
        if self.lateral_mode not in ("constrained", "free"):
            raise InvalidInputError("lateral_mode must be 'constrained' or 'free'")

    # the relaxed lateral row reuses the lateral drag coefficient
    @property
    def vk_drag_y(self) -> float:
        return self.vk_d_y

    @property
    def hover_frequency(self) -> float:
        return math.sqrt(self.m * self.g / self.k_tf)


@dataclass
class VerticalState:
    """Vertical-frame model state; p inertial, vv in the azimuth frame."""

    p: np.ndarray = field(default_factory=lambda: np.zeros(3))
    vv: np.ndarray = field(default_factory=lambda: np.zeros(3))
    psi: float = 0.0
    omega_psi: float = 0.0

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        self.vv = np.asarray(self.vv, dtype=float)

    @property
    def v_inertial(self) -> np.ndarray:
        return rotz(self.psi) @ self.vv

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.p, self.vv, [self.psi, self.omega_psi]])

    @classmethod
    def from_vector(cls, y: np.ndarray) -> "VerticalState":
        return cls(p=y[0:3].copy(), vv=y[3:6].copy(), psi=float(y[6]), omega_psi=float(y[7]))


@dataclass
class VerticalInputs:
    """Inputs of the vertical-frame model; theta_rud only matters in
    explicit-rudder mode."""

    gamma: np.ndarray
    f_flap: float
    theta_rud: float = 0.0

    def __post_init__(self):
        self.gamma = np.asarray(self.gamma, dtype=float)


# ---------------------------------------------------------------------------
# force and torque primitives
# ---------------------------------------------------------------------------


def thrust_magnitude(f_flap: float, params: FwavParams | VerticalParams) -> float:
    """Thrust k_tf * f^2 produced at flapping frequency f."""
    if f_flap < 0:
        raise InvalidInputError("flapping frequency must be non-negative")
    return params.k_tf * f_flap**2


def body_drag(v_body: np.ndarray, params: FwavParams) -> np.ndarray:
    """Componentwise quadratic drag -k_d,i sgn(v_i) v_i^2 in the body frame."""
    v = np.asarray(v_body, dtype=float)
    k = np.array([params.k_d_x, params.k_d_y, params.k_d_z])
    return -k * sgn(v) * v**2


def deflection_torque(state: FwavState, params: FwavParams) -> np.ndarray:
    """Torque from rudder/elevator deflections (small-deflection regime).

    Each axis combines a velocity-induced gain sgn(vz_b)*vx_b^2 and a
    flapping-induced gain f^2; x/z rows are driven by the rudder, the y row
    by the elevator.
    """
    v_body = quat_to_rot(state.q.normalized()).T @ state.v
    sv = float(sgn(v_body[2])) * v_body[0] ** 2
    f2 = state.f_flap**2
    return np.array([
        -(params.k_tau_x * sv + params.k_flap_x * f2) * state.theta_rud,
        -(params.k_tau_y * sv + params.k_flap_y * f2) * state.theta_ele,
        -(params.k_tau_z * sv + params.k_flap_z * f2) * state.theta_rud,
    ])


# ---------------------------------------------------------------------------
# right-hand sides
# ---------------------------------------------------------------------------


@dataclass
class ActuatorCommands:
    f_flap_c: float = 0.0
    theta_rud_c: float = 0.0
    theta_ele_c: float = 0.0


def full_rhs(state: FwavState, cmd: ActuatorCommands, params: FwavParams) -> np.ndarray:
    """Time derivative of the full state vector (16 numbers incl. quaternion)."""
    y = state.as_vector()
    if not np.all(np.isfinite(y)):
        raise PropagationError("non-finite state", step=-1)

    # RK4 stage states carry small quaternion drift; evaluate on the unit sphere
    q = state.q.normalized()
    rot = quat_to_rot(q)
    v_body = rot.T @ state.v
    force_body = body_drag(v_body, params)
    force_body[2] += thrust_magnitude(max(state.f_flap, 0.0), params)

    p_dot = state.v
    v_dot = np.array([0.0, 0.0, -params.g]) + rot @ force_body / params.m
    q_dot = quat_derivative(q, state.omega)
    tau = deflection_torque(state, params)
    omega_dot = np.linalg.solve(
        params.J, tau - np.cross(state.omega, params.J @ state.omega)
    )
    f_dot = (cmd.f_flap_c - state.f_flap) / params.k_flap_c
    rud_dot = (cmd.theta_rud_c - state.theta_rud) / params.k_rud_c
    ele_dot = (cmd.theta_ele_c - state.theta_ele) / params.k_ele_c

    return np.concatenate([
        p_dot, v_dot, q_dot.as_array(), omega_dot, [f_dot, rud_dot, ele_dot]
    ])


def yaw_acceleration(
    state: VerticalState,
    inputs: VerticalInputs,
    params: VerticalParams,
    rudder_mode: str,
) -> float:
    """Azimuth angular acceleration for the selected yaw-torque model.

    "explicit-rudder" uses the rudder-deflection torque plus the wind-vane
    term; "gamma-proxy" uses the lumped torque proportional to the lateral
    tilt.  The quadratic yaw damping is applied in both modes; set
    vk_damp = 0 to recover the undamped explicit form.
    """
    gx, gy, gz = inputs.gamma
    f2 = inputs.f_flap**2
    vvx, _, vvz = state.vv
    if rudder_mode == "explicit-rudder":
        rudder = -(
            params.vk_tau_x * float(sgn(vvz)) * vvz**2 + params.vk_flap_x * f2 * gz
        ) * inputs.theta_rud
        vane = params.vk_gamma * gy * float(sgn(vvx)) * vvx**2
        acc = rudder + vane
    elif rudder_mode == "gamma-proxy":
        gain = params.kbar_gamma * float(sgn(vvz)) * vvz**2 + params.kbar_flap_x * f2 * gz
        acc = -gain * gy
    else:
        raise InvalidInputError(f"unknown rudder mode {rudder_mode!r}")
    return acc - params.vk_damp * float(sgn(state.omega_psi)) * state.omega_psi**2


def vertical_rhs(
    state: VerticalState,
    inputs: VerticalInputs,
    params: VerticalParams,
    rudder_mode: str = "gamma-proxy",
) -> np.ndarray:
    """Time derivative of the vertical-frame state vector.

    The thrust enters the forward/vertical rows as -k_tf f^2 Gx and
    +k_tf f^2 Gz.  In "free" lateral mode the lateral row integrates the
    relaxed non-holonomic dynamics vvy_dot = w_psi*vvx - (vk_d_y/m)*sgn*vvy^2;
    in "constrained" mode (default) the lateral velocity is frozen, which is
    the idealization the flatness construction assumes.
    """
    gamma = inputs.gamma
    if abs(np.linalg.norm(gamma) - 1.0) > 1e-6:
        raise InvalidInputError("reduced attitude input must be unit norm")
    if inputs.f_flap < 0:
        raise InvalidInputError("flapping frequency must be non-negative")

    m = params.m
    f2 = inputs.f_flap**2
    vvx, vvy, vvz = state.vv
    w = state.omega_psi

    p_dot = rotz(state.psi) @ state.vv
    ax = -params.k_tf * f2 * gamma[0] / m - params.vk_d_x * float(sgn(vvx)) * vvx**2 / m - w * vvy
    az = params.k_tf * f2 * gamma[2] / m - params.vk_d_z * float(sgn(vvz)) * vvz**2 / m - params.g
    if params.lateral_mode == "constrained":
        ay = 0.0
    else:
        ay = w * vvx - params.vk_drag_y * float(sgn(vvy)) * vvy**2 / m

    w_dot = yaw_acceleration(state, inputs, params, rudder_mode)
    return np.concatenate([p_dot, [ax, ay, az], [w, w_dot]])


# ---------------------------------------------------------------------------
# fixed-step integration
# ---------------------------------------------------------------------------


def rk4_step(f: Callable[[float, np.ndarray], np.ndarray], t: float, y: np.ndarray, dt: float) -> np.ndarray:
    k1 = f(t, y)
    k2 = f(t + 0.5 * dt, y + 0.5 * dt * k1)
    k3 = f(t + 0.5 * dt, y + 0.5 * dt * k2)
    k4 = f(t + dt, y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate(
    rhs: Callable[[float, np.ndarray], np.ndarray],
    y0: np.ndarray,
    dt: float,
    duration: float,
    post_step: Callable[[np.ndarray], np.ndarray] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Fixed-step RK4 over [0, duration], logging every step.

    ``post_step`` may project the state after each step (quaternion
    renormalization).  Aborts with PropagationError naming the step index
    when the state goes non-finite.
    """
    if dt <= 0 or duration < dt:
        raise InvalidInputError("need dt > 0 and duration >= dt")
    n_steps = int(round(duration / dt))
    y = np.asarray(y0, dtype=float).copy()
    times = np.empty(n_steps + 1)
    states = np.empty((n_steps + 1, y.size))
    times[0] = 0.0
    states[0] = y
    for k in range(n_steps):
        t = k * dt
        try:
            y = rk4_step(rhs, t, y, dt)
        except PropagationError as err:
            raise PropagationError("integration produced non-finite state", step=k + 1) from err
        if post_step is not None:
            y = post_step(y)
        if not np.all(np.isfinite(y)):
            raise PropagationError("integration produced non-finite state", step=k + 1)
        times[k + 1] = (k + 1) * dt
        states[k + 1] = y
    return times, states


def _renormalize_quat(y: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(y[6:10])
    if n > 0:
        y[6:10] /= n
    return y


@dataclass
class FullLog:
    """Time-indexed log of a full-model run (one row per step)."""

    t: np.ndarray
    states: np.ndarray  # columns: p(3) v(3) q(4) omega(3) f thrud thele

    def state_at(self, index: int) -> FwavState:
        return FwavState.from_vector(self.states[index])

    def to_csv(self, path) -> None:
        rows = np.column_stack([self.t, self.states])
        _write_csv(path, FULL_LOG_HEADER, rows)


@dataclass
class VerticalLog:
    """Time-indexed log of a vertical-model run, including applied inputs."""

    t: np.ndarray
    states: np.ndarray  # columns: p(3) vv(3) psi omegapsi
    inputs: np.ndarray  # columns: gx gy gz fflap

    def state_at(self, index: int) -> VerticalState:
        return VerticalState.from_vector(self.states[index])

    @property
    def positions(self) -> np.ndarray:
        return self.states[:, 0:3]

    @property
    def v_inertial(self) -> np.ndarray:
        psi = self.states[:, 6]
        c, s = np.cos(psi), np.sin(psi)
        vvx, vvy, vvz = self.states[:, 3], self.states[:, 4], self.states[:, 5]
        return np.column_stack([c * vvx - s * vvy, s * vvx + c * vvy, vvz])

    def to_csv(self, path) -> None:
        rows = np.column_stack([self.t, self.states, self.inputs])
        _write_csv(path, VERTICAL_LOG_HEADER, rows)


def _write_csv(path, header: str, rows: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(f"{x:.12g}" for x in row) + "\n")


def simulate_full(
    state0: FwavState,
    params: FwavParams,
    commands: Callable[[float], ActuatorCommands],
    dt: float = 1e-3,
    duration: float = 1.0,
) -> FullLog:
    """Integrate the full model under a commanded actuator schedule."""

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        return full_rhs(FwavState.from_vector(y), commands(t), params)

    t, states = integrate(rhs, state0.as_vector(), dt, duration, post_step=_renormalize_quat)
    return FullLog(t, states)


def simulate_vertical(
    state0: VerticalState,
    params: VerticalParams,
    inputs: Callable[[float], VerticalInputs],
    rudder_mode: str = "gamma-proxy",
    dt: float = 1e-3,
    duration: float = 1.0,
) -> VerticalLog:
    """Integrate the vertical-frame model under a reduced-attitude schedule."""

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        return vertical_rhs(VerticalState.from_vector(y), inputs(t), params, rudder_mode)

    t, states = integrate(rhs, state0.as_vector(), dt, duration)
    applied = np.empty((t.size, 4))
    for i, ti in enumerate(t):
        u = inputs(ti)
        applied[i, 0:3] = u.gamma
        applied[i, 3] = u.f_flap
    return VerticalLog(t, states, applied)


def integrate_vertical_tabulated(
    state0: VerticalState,
    params: VerticalParams,
    gamma_grid: np.ndarray,
    f_grid: np.ndarray,
    dt: float,
    rudder_mode: str = "gamma-proxy",
    theta_rud_grid: np.ndarray | None = None,
) -> VerticalLog:
    """RK4 on the vertical model with inputs tabulated at half-step spacing.

    ``gamma_grid`` (2*n_steps+1, 3) and ``f_grid`` hold the inputs at times
    k*dt/2, the exact abscissae RK4 stages use.  Scalar arithmetic keeps the
    per-step cost low for the dt = 1e-4 consistency runs.  Equivalent to
    ``simulate_vertical`` with the same inputs (see the regression test).
    """
    if gamma_grid.shape[0] != f_grid.shape[0] or gamma_grid.shape[0] % 2 == 0:
        raise InvalidInputError("need an odd number of half-step input samples")
    if rudder_mode not in ("gamma-proxy", "explicit-rudder"):
        raise InvalidInputError(f"unknown rudder mode {rudder_mode!r}")
    n_steps = (gamma_grid.shape[0] - 1) // 2
    if theta_rud_grid is None:
        theta_rud_grid = np.zeros(gamma_grid.shape[0])
    constrained = params.lateral_mode == "constrained"
    proxy = rudder_mode == "gamma-proxy"
    m, g_acc, k_tf = params.m, params.g, params.k_tf
    kdx, kdy, kdz = params.vk_d_x, params.vk_d_y, params.vk_d_z

    def deriv(y, gx, gy, gz, f2, th):
        px, py, pz, vvx, vvy, vvz, psi, w = y
        c, s = math.cos(psi), math.sin(psi)
        sx = 0.0 if vvx == 0.0 else math.copysign(1.0, vvx)
        sy = 0.0 if vvy == 0.0 else math.copysign(1.0, vvy)
        sz = 0.0 if vvz == 0.0 else math.copysign(1.0, vvz)
        sw = 0.0 if w == 0.0 else math.copysign(1.0, w)
        ax = -k_tf * f2 * gx / m - kdx * sx * vvx * vvx / m - w * vvy
        ay = 0.0 if constrained else w * vvx - kdy * sy * vvy * vvy / m
        az = k_tf * f2 * gz / m - kdz * sz * vvz * vvz / m - g_acc
        if proxy:
            wdot = -(params.kbar_gamma * sz * vvz * vvz + params.kbar_flap_x * f2 * gz) * gy
        else:
            wdot = (
                -(params.vk_tau_x * sz * vvz * vvz + params.vk_flap_x * f2 * gz) * th
                + params.vk_gamma * gy * sx * vvx * vvx
            )
        wdot -= params.vk_damp * sw * w * w
        return (
            c * vvx - s * vvy, s * vvx + c * vvy, vvz, ax, ay, az, w, wdot,
        )

    y = tuple(float(v) for v in state0.as_vector())
    times = np.empty(n_steps + 1)
    states = np.empty((n_steps + 1, 8))
    times[0] = 0.0
    states[0] = y

    def stage(i):
        gx, gy, gz = gamma_grid[i]
        return float(gx), float(gy), float(gz), float(f_grid[i]) ** 2, float(theta_rud_grid[i])

    for k in range(n_steps):
        u0 = stage(2 * k)
        um = stage(2 * k + 1)
        u1 = stage(2 * k + 2)
        k1 = deriv(y, *u0)
        y2 = tuple(y[i] + 0.5 * dt * k1[i] for i in range(8))
        k2 = deriv(y2, *um)
        y3 = tuple(y[i] + 0.5 * dt * k2[i] for i in range(8))
        k3 = deriv(y3, *um)
        y4 = tuple(y[i] + dt * k3[i] for i in range(8))
        k4 = deriv(y4, *u1)
        y = tuple(
            y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            for i in range(8)
        )
        if not all(math.isfinite(v) for v in y):
            raise PropagationError("integration produced non-finite state", step=k + 1)
        times[k + 1] = (k + 1) * dt
        states[k + 1] = y

    applied = np.column_stack([gamma_grid[::2], f_grid[::2]])
    return VerticalLog(times, states, applied)


def hover_state(params: FwavParams) -> FwavState:
    return FwavState(f_flap=params.hover_frequency)


def matched_vertical_params(params: FwavParams, **overrides) -> VerticalParams:
    """Vertical-frame parameter set matching a full-model parameter set."""
    base = dict(
        m=params.m, g=params.g, k_tf=params.k_tf,
        vk_d_x=params.k_d_x, vk_d_y=params.k_d_y, vk_d_z=params.k_d_z,
    )
    base.update(overrides)
    return VerticalParams(**base)
