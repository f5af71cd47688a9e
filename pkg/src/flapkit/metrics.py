"""Tracking-error metrics: along-track / cross-track / altitude decomposition.

At every log sample the position error e = sigma_r - p splits into the
horizontal component along the desired velocity azimuth, the horizontal
component perpendicular to it, and the vertical component, so the three
channels always recompose to |e|^2.  Where the desired horizontal speed is
too small to define a heading, the split falls back to the inertial X/Y
axes.  MAX and RMS per channel mirror the published result-table layout;
the published real-flight numbers ship alongside as a comparison baseline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .errors import InvalidInputError
from .flatness import V_EPS
from .trajectory import PiecewiseTrajectory

METRICS_HEADER = (
    "case,along_max,along_rms,cross_max,cross_rms,alt_max,alt_rms"
)


@dataclass
class ChannelStats:
    max: float
    rms: float

    def __post_init__(self):
        if self.rms > self.max + 1e-12:
            raise InvalidInputError("rms cannot exceed max")


@dataclass
class MetricsReport:
    case: str
    along: ChannelStats
    cross: ChannelStats
    altitude: ChannelStats

    def row(self) -> list[float]:
        return [
            self.along.max, self.along.rms,
            self.cross.max, self.cross.rms,
            self.altitude.max, self.altitude.rms,
        ]

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(METRICS_HEADER + "\n")
            cells = [self.case] + [f"{x:.12g}" for x in self.row()]
            fh.write(",".join(cells) + "\n")

    def summary(self) -> str:
        return (
            f"case {self.case}\n"
            f"  along-track  MAX {self.along.max:.3f} m  RMS {self.along.rms:.3f} m\n"
            f"  cross-track  MAX {self.cross.max:.3f} m  RMS {self.cross.rms:.3f} m\n"
            f"  altitude     MAX {self.altitude.max:.3f} m  RMS {self.altitude.rms:.3f} m"
        )


def error_components(
    positions: np.ndarray,
    times: np.ndarray,
    traj: PiecewiseTrajectory,
) -> np.ndarray:
    """Per-sample (along, cross, altitude) error components, shape (n, 3)."""
    times = np.asarray(times, dtype=float)
    t_ref = np.minimum(times, traj.duration)
    ref_pos = traj.eval_many(t_ref, 0)
    ref_vel = traj.eval_many(t_ref, 1)
    err = ref_pos - np.asarray(positions, dtype=float)

    h_speed = np.hypot(ref_vel[:, 0], ref_vel[:, 1])
    live = h_speed >= V_EPS
    ux = np.where(live, ref_vel[:, 0] / np.where(live, h_speed, 1.0), 1.0)
    uy = np.where(live, ref_vel[:, 1] / np.where(live, h_speed, 1.0), 0.0)

    along = err[:, 0] * ux + err[:, 1] * uy
    cross = -err[:, 0] * uy + err[:, 1] * ux
    return np.column_stack([along, cross, err[:, 2]])


def compute_metrics(
    positions: np.ndarray,
    times: np.ndarray,
    traj: PiecewiseTrajectory,
    case: str = "run",
) -> MetricsReport:
    if len(times) == 0:
        raise InvalidInputError("empty log")
    comps = error_components(positions, times, traj)
    stats = []
    for j in range(3):
        col = comps[:, j]
        stats.append(ChannelStats(
            max=float(np.max(np.abs(col))),
            rms=float(math.sqrt(np.mean(col**2))),
        ))
    return MetricsReport(case=case, along=stats[0], cross=stats[1], altitude=stats[2])


def reference_tracking_errors() -> dict[str, MetricsReport]:
    """Published real-flight MAX/RMS baselines, keyed by case name."""
    text = resources.files("flapkit").joinpath(
        "data/reference_tracking_errors.csv"
    ).read_text(encoding="utf-8")
    out: dict[str, MetricsReport] = {}
    for line in text.strip().splitlines()[1:]:
        cells = line.split(",")
        vals = [float(x) for x in cells[1:7]]
        out[cells[0]] = MetricsReport(
            case=cells[0],
            along=ChannelStats(vals[0], vals[1]),
            cross=ChannelStats(vals[2], vals[3]),
            altitude=ChannelStats(vals[4], vals[5]),
        )
    return out
