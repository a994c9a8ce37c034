"""Probabilistic camera detection model.

The non-detection likelihood is ``1 - P_dmax * D * A`` with an exponential
distance term ``D`` and a generalized-Gaussian bearing term ``A``. Occluded
cells and cells outside the horizontal field of view are never detected.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .scene import RobotState, SceneModel, visibility


@dataclass(frozen=True)
class SensorParams:
    sigma: float = 0.4
    d_max: float = 3.0
    d_min: float = 0.4
    alpha: float = 1.0  # radians
    beta: float = 100.0
    p_dmax: float = 0.9
    fov: float = 110.0  # degrees
    normalize_angle: bool = True

    def __post_init__(self):
        if not 0 < self.p_dmax <= 1:
            raise ValueError("p_dmax must be in (0, 1]")
        if not self.d_max > self.d_min > 0:
            raise ValueError("need d_max > d_min > 0")
        if self.alpha <= 0 or self.beta < 1 or self.sigma <= 0:
            raise ValueError("need alpha > 0, beta >= 1, sigma > 0")
        if not 0 < self.fov <= 360:
            raise ValueError("fov must be in (0, 360] degrees")

    @property
    def half_fov(self) -> float:
        return math.radians(self.fov) / 2.0

    @property
    def angle_peak(self) -> float:
        """Raw angle density at zero bearing: beta / (2 alpha Gamma(1/beta))."""
        return self.beta / (2.0 * self.alpha * math.gamma(1.0 / self.beta))

    @property
    def angle_scale(self) -> float:
        """Multiplier applied to exp(-|phi|^beta / alpha^beta)."""
        return 1.0 if self.normalize_angle else self.angle_peak

    def kernel_args(self) -> tuple:
        return (self.sigma, self.d_max, self.alpha, self.beta, self.p_dmax,
                self.half_fov, self.angle_scale)


def _xy(tau):
    return float(tau[0]), float(tau[1])


def distance_factor(s: RobotState, tau, p: SensorParams) -> float:
    tx, ty = _xy(tau)
    d2 = (tx - s.x) ** 2 + (ty - s.y) ** 2
    return math.exp(-p.sigma / p.d_max**2 * d2)


def angle_factor(phi_rel: float, p: SensorParams) -> float:
    a = abs(float(_kernels.wrap_angle(float(phi_rel))))
    if a > p.half_fov:
        return 0.0
    return p.angle_scale * math.exp(-((a / p.alpha) ** p.beta))


def relative_bearing(s: RobotState, tau) -> float:
    """Bearing of ``tau`` off the camera axis in (-pi, pi]; 0 when ``tau`` is the camera position."""
    tx, ty = _xy(tau)
    if tx == s.x and ty == s.y:
        return 0.0
    return float(_kernels.wrap_angle(math.atan2(ty - s.y, tx - s.x) - s.phi))


def detection_prob(s: RobotState, tau, p: SensorParams, visible: bool = True) -> float:
    return 1.0 - nondetection_prob(s, tau, p, visible)


def nondetection_prob(s: RobotState, tau, p: SensorParams, visible: bool = True) -> float:
    if not visible:
        return 1.0
    tx, ty = _xy(tau)
    return float(_kernels.nondetection_one(s.x, s.y, s.phi, tx, ty, *p.kernel_args()))


def nondetection_grid(scene: SceneModel, s: RobotState, p: SensorParams) -> np.ndarray:
    """Non-detection probability for every cell center, occlusion included."""
    xs, ys = scene.centers
    vis = visibility(scene, s).ravel()
    dx = xs - s.x
    dy = ys - s.y
    rel = np.abs(np.pi - ((np.pi - (np.arctan2(dy, dx) - s.phi)) % (2 * np.pi)))
    rel[(dx == 0) & (dy == 0)] = 0.0
    dist_term = np.exp(-p.sigma / p.d_max**2 * (dx * dx + dy * dy))
    with np.errstate(under="ignore"):
        ang_term = p.angle_scale * np.exp(-((rel / p.alpha) ** p.beta))
    q = np.clip(1.0 - p.p_dmax * dist_term * ang_term, 0.0, 1.0)
    q = np.where(vis & (rel <= p.half_fov), q, 1.0)
    return q.reshape(scene.height, scene.width)
