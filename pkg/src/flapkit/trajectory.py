"""Piecewise-polynomial flat-output trajectories.

A trajectory is an ordered list of segments; each segment holds one
coefficient row per axis (x, y, z) in ascending powers of local time and a
common duration T.  Global time t in [0, M*T] maps to segment floor(t/T);
junction times resolve to the later segment at local time 0.

The snap integral of a segment is a quadratic form in its coefficients and is
evaluated in closed form; the path-length (velocity norm) part of the
objective has no closed form and uses fixed-order Gauss-Legendre quadrature.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import InvalidInputError, TrajectoryDomainError

DEFAULT_ORDER = 6

SAMPLED_HEADER = "t,x,y,z,vx,vy,vz,ax,ay,az,jx,jy,jz,sx,sy,sz"

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(32)


def falling_factorial(i: int, r: int) -> float:
    """i * (i-1) * ... * (i-r+1); the t^i derivative coefficient."""
    out = 1.0
    for k in range(r):
        out *= i - k
    return out


def polyval_derivative(coeffs: np.ndarray, t, order: int = 0):
    """Evaluate the order-th derivative of sum_i c_i t^i at t."""
    coeffs = np.asarray(coeffs, dtype=float)
    n = coeffs.size
    if order >= n:
        return np.zeros_like(np.asarray(t, dtype=float))
    d = np.array([coeffs[i] * falling_factorial(i, order) for i in range(order, n)])
    return np.polynomial.polynomial.polyval(t, d)


def derivative_row(n_coeffs: int, t: float, order: int) -> np.ndarray:
    """Row r with r @ c = d^order/dt^order sum_i c_i t^i."""
    row = np.zeros(n_coeffs)
    for i in range(order, n_coeffs):
        row[i] = falling_factorial(i, order) * t ** (i - order)
    return row


def snap_gram_matrix(n_coeffs: int, T: float) -> np.ndarray:
    """Gram matrix Q with c^T Q c = integral over [0,T] of (d^4/dt^4 poly)^2."""
    q = np.zeros((n_coeffs, n_coeffs))
    for i in range(4, n_coeffs):
        for k in range(4, n_coeffs):
            power = i + k - 7
            q[i, k] = (
                falling_factorial(i, 4) * falling_factorial(k, 4) * T**power / power
            )
    return q


@dataclass
class PolySegment:
    """One polynomial segment: coeffs shape (3, N+1), ascending powers, local
    time in (0, T]."""

    coeffs: np.ndarray
    T: float

    def __post_init__(self):
        self.coeffs = np.atleast_2d(np.asarray(self.coeffs, dtype=float))
        if self.coeffs.shape[0] != 3:
            raise InvalidInputError("segment needs one coefficient row per axis")
        if self.T <= 0:
            raise InvalidInputError("segment duration must be positive")

    @property
    def order(self) -> int:
        return self.coeffs.shape[1] - 1

    def eval(self, t_local, order: int = 0) -> np.ndarray:
        return np.stack(
            [polyval_derivative(self.coeffs[axis], t_local, order) for axis in range(3)]
        )

    def snap_integral(self) -> float:
        q = snap_gram_matrix(self.coeffs.shape[1], self.T)
        return float(sum(self.coeffs[axis] @ q @ self.coeffs[axis] for axis in range(3)))

    def speed_integral(self) -> float:
        """Integral of sum_axis |velocity_axis| via 32-node Gauss-Legendre."""
        nodes = 0.5 * self.T * (_GL_NODES + 1.0)
        weights = 0.5 * self.T * _GL_WEIGHTS
        vel = self.eval(nodes, order=1)
        return float(np.sum(weights * np.sum(np.abs(vel), axis=0)))


@dataclass
class PiecewiseTrajectory:
    """Multi-segment polynomial flat output sigma(t) over [0, M*T]."""

    segments: list[PolySegment]

    def __post_init__(self):
        if not self.segments:
            raise InvalidInputError("trajectory needs at least one segment")
        durations = {seg.T for seg in self.segments}
        if len(durations) != 1:
            raise InvalidInputError("segments must share one duration")

    @property
    def M(self) -> int:
        return len(self.segments)

    @property
    def T(self) -> float:
        return self.segments[0].T

    @property
    def duration(self) -> float:
        return self.M * self.T

    def locate(self, t: float) -> tuple[int, float]:
        """Segment index and local time; junctions resolve to the later
        segment at local time 0."""
        if t < -1e-12 or t > self.duration + 1e-12:
            raise TrajectoryDomainError(
                f"t={t:.6f} outside [0, {self.duration:.6f}]"
            )
        t = min(max(t, 0.0), self.duration)
        idx = min(int(t / self.T), self.M - 1)
        t_local = t - idx * self.T
        if idx < self.M - 1 and abs(t_local - self.T) < 1e-12:
            return idx + 1, 0.0
        return idx, t_local

    def eval(self, t: float, order: int = 0) -> np.ndarray:
        idx, t_local = self.locate(t)
        return self.segments[idx].eval(t_local, order)

    def eval_many(self, times: Iterable[float], order: int = 0) -> np.ndarray:
        """Vectorized evaluation at many times, shape (len(times), 3)."""
        times = np.asarray(list(times) if not isinstance(times, np.ndarray) else times,
                           dtype=float)
        if times.size == 0:
            return np.zeros((0, 3))
        if np.min(times) < -1e-12 or np.max(times) > self.duration + 1e-12:
            raise TrajectoryDomainError("evaluation times outside [0, M*T]")
        clipped = np.clip(times, 0.0, self.duration)
        seg_idx = np.minimum((clipped / self.T).astype(int), self.M - 1)
        t_local = clipped - seg_idx * self.T
        at_junction = (seg_idx < self.M - 1) & (np.abs(t_local - self.T) < 1e-12)
        seg_idx[at_junction] += 1
        t_local[at_junction] = 0.0
        out = np.empty((times.size, 3))
        for s in np.unique(seg_idx):
            mask = seg_idx == s
            out[mask] = self.segments[s].eval(t_local[mask], order).T
        return out

    def flat_sample(self, t: float) -> "FlatSample":
        idx, t_local = self.locate(t)
        seg = self.segments[idx]
        vals = [seg.eval(t_local, order) for order in range(5)]
        return FlatSample(*vals)

    def continuity_residuals(self) -> np.ndarray:
        """|junction mismatch| for derivative orders 0..3, shape (M-1, 4)."""
        out = np.zeros((self.M - 1, 4))
        for j in range(self.M - 1):
            for order in range(4):
                left = self.segments[j].eval(self.T, order)
                right = self.segments[j + 1].eval(0.0, order)
                out[j, order] = float(np.max(np.abs(left - right)))
        return out

    def to_coeff_csv(self, path) -> None:
        n = self.segments[0].coeffs.shape[1]
        header = "seg,axis," + ",".join(f"c{i}" for i in range(n)) + ",T"
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(header + "\n")
            for s_idx, seg in enumerate(self.segments):
                for axis in range(3):
                    cells = [str(s_idx), str(axis)]
                    cells += [f"{c:.17g}" for c in seg.coeffs[axis]]
                    cells.append(f"{seg.T:.17g}")
                    fh.write(",".join(cells) + "\n")

    @classmethod
    def from_coeff_csv(cls, path) -> "PiecewiseTrajectory":
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().strip().split(",")
            n = len(header) - 3
            rows = [line.strip().split(",") for line in fh if line.strip()]
        seg_ids = sorted({int(r[0]) for r in rows})
        segments = []
        for s_idx in seg_ids:
            coeffs = np.zeros((3, n))
            T = None
            for r in rows:
                if int(r[0]) != s_idx:
                    continue
                axis = int(r[1])
                coeffs[axis] = [float(x) for x in r[2 : 2 + n]]
                T = float(r[-1])
            segments.append(PolySegment(coeffs, T))
        return cls(segments)

    def to_sampled_csv(self, path, dt: float = 0.01) -> None:
        times = np.arange(0.0, self.duration + dt / 2, dt)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(SAMPLED_HEADER + "\n")
            for t in times:
                t_c = min(float(t), self.duration)
                cells = [f"{t_c:.12g}"]
                for order in range(5):
                    cells += [f"{v:.12g}" for v in self.eval(t_c, order)]
                fh.write(",".join(cells) + "\n")


@dataclass
class FlatSample:
    """Flat output and its derivatives up to 4th order at one instant."""

    sigma: np.ndarray
    d1: np.ndarray = field(default_factory=lambda: np.zeros(3))
    d2: np.ndarray = field(default_factory=lambda: np.zeros(3))
    d3: np.ndarray = field(default_factory=lambda: np.zeros(3))
    d4: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        for name in ("sigma", "d1", "d2", "d3", "d4"):
            value = np.asarray(getattr(self, name), dtype=float)
            if value.shape != (3,):
                raise InvalidInputError(f"{name} must be a 3-vector")
            if not np.all(np.isfinite(value)):
                raise InvalidInputError(f"{name} must be finite")
            setattr(self, name, value)


@dataclass
class ObjectiveWeights:
    """Snap weight mu_p and path-length weight mu_v."""

    mu_p: float = 1.0
    mu_v: float = 0.1

    def __post_init__(self):
        if self.mu_p <= 0 or self.mu_v < 0:
            raise InvalidInputError("need mu_p > 0 and mu_v >= 0")


def rec(x):
    """Rectifier max(x, 0); equality aggregate of a sampled inequality."""
    return np.maximum(x, 0.0)


def snap_objective(traj: PiecewiseTrajectory, weights: ObjectiveWeights) -> float:
    """mu_p * closed-form snap integral + mu_v * quadrature path-length term."""
    total = weights.mu_p * sum(seg.snap_integral() for seg in traj.segments)
    if weights.mu_v > 0:
        total += weights.mu_v * sum(seg.speed_integral() for seg in traj.segments)
    return float(total)


def single_segment(coeffs_per_axis, T: float) -> PiecewiseTrajectory:
    """Convenience constructor for a one-segment trajectory."""
    return PiecewiseTrajectory([PolySegment(np.asarray(coeffs_per_axis, dtype=float), T)])


def constant_trajectory(point, T: float = 1.0, order: int = DEFAULT_ORDER) -> PiecewiseTrajectory:
    coeffs = np.zeros((3, order + 1))
    coeffs[:, 0] = np.asarray(point, dtype=float)
    return single_segment(coeffs, T)
