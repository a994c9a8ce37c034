"""Target-location belief: saliency projection, inhibition, fusion and Bayes updates."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .attention import SaliencyMap
from .scene import RobotState, SceneModel, RenderedView
from .sensor import SensorParams, nondetection_grid

PRIOR_SIGMA = 3.5  # cells


@dataclass(frozen=True, eq=False)
class BeliefGrid:
    values: np.ndarray  # (height, width), sums to 1
    support: np.ndarray  # (height, width) bool; cells that may hold the target
    epsilon: float = 0.5
    prior_kind: str = "uniform"

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must be in [0, 1]")

    @property
    def argmax(self) -> tuple[int, int]:
        cy, cx = np.unravel_index(int(np.argmax(self.values)), self.values.shape)
        return (int(cx), int(cy))

    def entropy(self) -> float:
        p = self.values[self.values > 0]
        return float(-(p * np.log(p)).sum())


@dataclass(frozen=True, eq=False)
class InhibitionGrid:
    values: np.ndarray

    @classmethod
    def ones(cls, scene: SceneModel) -> "InhibitionGrid":
        return cls(np.ones((scene.height, scene.width)))


@dataclass(frozen=True, eq=False)
class StimulusField:
    values: np.ndarray

    @property
    def any(self) -> bool:
        return bool((self.values > 0).any())


def _normalized(values: np.ndarray, support: np.ndarray) -> np.ndarray:
    v = np.where(support, np.clip(values, 0.0, None), 0.0)
    total = v.sum()
    if total <= 0:
        raise ValueError("belief has no mass on free cells")
    return v / total


def init_belief(scene: SceneModel, prior: str = "uniform", mu: tuple[int, int] | None = None,
                sigma: float = PRIOR_SIGMA, epsilon: float = 0.5) -> BeliefGrid:
    """Uniform over free cells, or an isotropic Gaussian (in cells) around ``mu``."""
    support = scene.free.copy()
    if prior == "uniform":
        values = support.astype(np.float64)
    elif prior == "gaussian":
        if mu is None or not scene.in_bounds(mu):
            raise ValueError("gaussian prior needs a mean cell inside the map")
        ys, xs = np.mgrid[0:scene.height, 0:scene.width]
        d2 = (xs - mu[0]) ** 2 + (ys - mu[1]) ** 2
        values = np.exp(-d2 / (2.0 * sigma**2))
    else:
        raise ValueError(f"unknown prior {prior!r}")
    return BeliefGrid(_normalized(values, support), support, epsilon, prior)


def project_saliency(view: RenderedView, smap: SaliencyMap | np.ndarray, scene: SceneModel) -> StimulusField:
    """Mean saliency over the pixels whose ray hits each cell; zero where nothing was hit."""
    values = smap.values if isinstance(smap, SaliencyMap) else np.asarray(smap)
    if values.shape != view.ray_hits.shape:
        raise ValueError(f"saliency shape {values.shape} does not match view {view.ray_hits.shape}")
    hits = view.ray_hits.ravel()
    valid = hits >= 0
    n = scene.n_cells
    counts = np.bincount(hits[valid], minlength=n).astype(np.float64)
    sal = values.ravel()[valid]
    sums = np.bincount(hits[valid], weights=np.where(sal > 0, sal, 0.0), minlength=n)
    field = np.divide(sums, counts, out=np.zeros(n), where=counts > 0)
    return StimulusField(field.reshape(scene.height, scene.width))


def update_inhibition(inh: InhibitionGrid, s: RobotState, stim: StimulusField, p: SensorParams,
                      scene: SceneModel | None = None, cellsize: float = 1.0) -> InhibitionGrid:
    """Shrink inhibition at stimulated cells by clamp(dist / (2 (d_max - d_min)), 0, 1)."""
    if scene is not None:
        cellsize = scene.cellsize
    h, w = inh.values.shape
    ys, xs = np.mgrid[0:h, 0:w]
    dist = np.hypot((xs + 0.5) * cellsize - s.x, (ys + 0.5) * cellsize - s.y)
    factor = np.clip(0.5 * dist / (p.d_max - p.d_min), 0.0, 1.0)
    return InhibitionGrid(np.where(stim.values > 0, factor * inh.values, inh.values))


def fuse_stimuli(b: BeliefGrid, stim: StimulusField, inh: InhibitionGrid) -> BeliefGrid:
    """epsilon * past belief + (1 - epsilon) * normalized (stimulus * inhibition)."""
    if not (b.values.shape == stim.values.shape == inh.values.shape):
        raise ValueError("belief, stimulus and inhibition grids must share a shape")
    weighted = np.where(b.support, stim.values * inh.values, 0.0)
    total = weighted.sum()
    if total <= 0:
        return b
    candidate = weighted / total
    mixed = b.epsilon * b.values + (1.0 - b.epsilon) * candidate
    return replace(b, values=_normalized(mixed, b.support))


def bayes_nondetection_update(b: BeliefGrid, s: RobotState, p: SensorParams, scene: SceneModel) -> BeliefGrid:
    """Multiply by the non-detection likelihood of every cell and renormalize."""
    q = nondetection_grid(scene, s, p)
    if np.all(q == 1.0):
        return b
    post = b.values * q
    if post.sum() <= 0:
        return b
    return replace(b, values=_normalized(post, b.support))
