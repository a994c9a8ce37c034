"""2.5D grid world, scenario files and synthetic camera rendering."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import ndimage, sparse
from scipy.sparse import csgraph

from . import _kernels

RAY_STEP = 0.1  # meters; well below the cell size to avoid corner skipping
VIS_SUBSAMPLE = 10  # planner visibility samples per cell side
DEFAULT_BACKGROUND = (128, 128, 128)
DEFAULT_WALL = (96, 96, 96)
DEFAULT_TARGET_HEIGHT = 0.5
WALL_HEIGHT = 1.0
PATH_HOP = 3  # cells; longest straight hop in the travel-distance graph


class ScenarioError(ValueError):
    """Raised for malformed or invalid scenario files.

    ``lineno`` is set for parse errors and left ``None`` for validation errors.
    """

    def __init__(self, message: str, lineno: int | None = None, source: str | None = None):
        self.lineno = lineno
        self.source = source
        where = ""
        if source:
            where = f"{source}:"
        if lineno is not None:
            where += f"{lineno}:"
        super().__init__(f"{where} {message}".strip() if where else message)


@dataclass(frozen=True)
class SceneObject:
    cell: tuple[int, int]
    height: float
    color: tuple[int, int, int]
    is_target: bool = False


@dataclass(frozen=True)
class RobotState:
    x: float
    y: float
    phi: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "phi", float(_kernels.wrap_angle(float(self.phi))))


@dataclass(frozen=True)
class CameraIntrinsics:
    image_width: int = 160
    image_height: int = 120
    fov_h: float = 110.0  # degrees
    max_range: float = 20.0  # meters
    camera_height: float = 0.5  # meters, only used for the row projection

    def __post_init__(self):
        if not 0 < self.fov_h < 180:
            raise ValueError("fov_h must be in (0, 180) degrees")
        if self.image_width < 16 or self.image_height < 16:
            raise ValueError("image dimensions must be >= 16")
        if self.max_range <= 0:
            raise ValueError("max_range must be positive")

    @property
    def no_hit_depth(self) -> float:
        return self.max_range + 1.0


@dataclass(frozen=True, eq=False)
class RenderedView:
    """Camera output. ``ray_hits`` holds flat cell indices ``cy * width + cx`` or -1."""

    color: np.ndarray  # (rows, cols, 3) uint8
    depth: np.ndarray  # (rows, cols) float64
    ray_hits: np.ndarray  # (rows, cols) int64
    state: RobotState
    camera: CameraIntrinsics


@dataclass(frozen=True, eq=False)
class SceneModel:
    width: int
    height: int
    obstacle: np.ndarray  # (height, width) bool, indexed [cy, cx]
    objects: tuple[SceneObject, ...]
    target_cell: tuple[int, int]
    target_color: tuple[int, int, int] | None
    cellsize: float = 1.0
    background: tuple[int, int, int] = DEFAULT_BACKGROUND
    wall_color: tuple[int, int, int] = DEFAULT_WALL
    robot: RobotState | None = None
    name: str = field(default="scene")

    def __post_init__(self):
        self.obstacle.setflags(write=False)
        _validate(self)

    @property
    def n_cells(self) -> int:
        return self.width * self.height

    def cell_center(self, cell: tuple[int, int]) -> tuple[float, float]:
        cx, cy = cell
        return ((cx + 0.5) * self.cellsize, (cy + 0.5) * self.cellsize)

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        return (int(math.floor(x / self.cellsize)), int(math.floor(y / self.cellsize)))

    def in_bounds(self, cell: tuple[int, int]) -> bool:
        cx, cy = cell
        return 0 <= cx < self.width and 0 <= cy < self.height

    @cached_property
    def free(self) -> np.ndarray:
        out = ~self.obstacle
        out.setflags(write=False)
        return out

    @cached_property
    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Flat (x, y) arrays of every cell center, row-major."""
        ys, xs = np.mgrid[0:self.height, 0:self.width]
        return ((xs.ravel() + 0.5) * self.cellsize, (ys.ravel() + 0.5) * self.cellsize)

    @cached_property
    def object_index(self) -> np.ndarray:
        """(height, width) array of indices into ``objects`` (-1 where empty)."""
        idx = np.full((self.height, self.width), -1, dtype=np.int64)
        for i, obj in enumerate(self.objects):
            cx, cy = obj.cell
            idx[cy, cx] = i
        idx.setflags(write=False)
        return idx

    @cached_property
    def nearest_free(self) -> np.ndarray:
        """(height, width, 2) world coordinates of the nearest free cell center."""
        _, (iy, ix) = ndimage.distance_transform_edt(self.obstacle, return_indices=True)
        out = np.stack([(ix + 0.5) * self.cellsize, (iy + 0.5) * self.cellsize], axis=-1)
        return out.astype(np.float64)

    @cached_property
    def path_distances(self) -> np.ndarray:
        """(n_cells, n_cells) shortest obstacle-free travel distance between cell centers.

        Any-angle approximation: straight hops of up to PATH_HOP cells between
        mutually visible free centers. Obstacle cells and unreachable pairs are inf.
        """
        n = self.n_cells
        free = ~self.obstacle
        rows, cols, wts = [], [], []
        offsets = [(dx, dy) for dx in range(-PATH_HOP, PATH_HOP + 1) for dy in range(0, PATH_HOP + 1)
                   if (dy > 0 or dx > 0)]
        for cy in range(self.height):
            for cx in range(self.width):
                if not free[cy, cx]:
                    continue
                x0, y0 = self.cell_center((cx, cy))
                for dx, dy in offsets:
                    nx, ny = cx + dx, cy + dy
                    if not (0 <= nx < self.width and 0 <= ny < self.height) or not free[ny, nx]:
                        continue
                    x1, y1 = self.cell_center((nx, ny))
                    if _kernels.segment_clear(self.obstacle, self.cellsize, x0, y0, x1, y1):
                        rows.append(cy * self.width + cx)
                        cols.append(ny * self.width + nx)
                        wts.append(math.hypot(x1 - x0, y1 - y0))
        graph = sparse.csr_matrix((wts, (rows, cols)), shape=(n, n))
        dist = csgraph.shortest_path(graph, method="D", directed=False)
        dist[~free.ravel(), :] = np.inf
        dist[:, ~free.ravel()] = np.inf
        dist.setflags(write=False)
        return dist

    @cached_property
    def visibility_cache(self) -> "VisibilityCache":
        return VisibilityCache.for_scene(self)

    def start_state(self) -> RobotState:
        """Scenario robot pose, or the first free non-target cell (row-major) facing +x."""
        if self.robot is not None:
            return self.robot
        for cy in range(self.height):
            for cx in range(self.width):
                if not self.obstacle[cy, cx] and (cx, cy) != self.target_cell:
                    x, y = self.cell_center((cx, cy))
                    return RobotState(x, y, 0.0)
        x, y = self.cell_center(self.target_cell)
        return RobotState(x, y, 0.0)


@dataclass(eq=False)
class VisibilityCache:
    """Lazily filled line-of-sight table from sub-cell sample points to cell centers.

    Only the planner's inner search reads it; anything reported uses exact rays.
    """

    sub: int
    table: np.ndarray  # (height * sub, width * sub, n_cells) bool
    filled: np.ndarray  # (height, width) bool

    @classmethod
    def for_scene(cls, scene: SceneModel, sub: int = VIS_SUBSAMPLE) -> "VisibilityCache":
        n = scene.n_cells
        table = np.zeros((scene.height * sub, scene.width * sub, n), dtype=np.bool_)
        return cls(sub, table, np.zeros((scene.height, scene.width), dtype=np.bool_))


def _validate(scene: SceneModel) -> None:
    if scene.width < 2 or scene.height < 2:
        raise ScenarioError("map width and height must be >= 2")
    if scene.obstacle.shape != (scene.height, scene.width):
        raise ScenarioError("occupancy grid shape does not match map size")
    if scene.cellsize <= 0:
        raise ScenarioError("cellsize must be positive")
    seen = set()
    for obj in scene.objects:
        if not scene.in_bounds(obj.cell):
            raise ScenarioError(f"object cell {obj.cell} is outside the map bounds")
        if obj.cell in seen:
            raise ScenarioError(f"more than one object on cell {obj.cell}")
        seen.add(obj.cell)
        if not 0.0 <= obj.height <= 1.0:
            raise ScenarioError(f"object height {obj.height} outside [0, 1]")
    if not scene.in_bounds(scene.target_cell):
        raise ScenarioError(f"target_cell {scene.target_cell} is outside the map bounds")
    cx, cy = scene.target_cell
    if scene.obstacle[cy, cx]:
        raise ScenarioError(f"target_cell {scene.target_cell} must be free (it is an obstacle)")
    if sum(o.is_target for o in scene.objects) != 1:
        raise ScenarioError("exactly one target object is required")
    if scene.robot is not None and not is_traversable(scene, scene.robot.x, scene.robot.y):
        raise ScenarioError(f"robot pose ({scene.robot.x}, {scene.robot.y}) must lie in a free cell")


# ---------------------------------------------------------------------------
# scenario files


def _rgb(tokens, lineno, source):
    vals = tuple(_num(t, int, lineno, source) for t in tokens)
    if any(v < 0 or v > 255 for v in vals):
        raise ScenarioError(f"color components must be in 0..255, got {vals}", lineno, source)
    return vals


def _num(token, kind, lineno, source):
    try:
        return kind(token)
    except ValueError:
        raise ScenarioError(f"expected {kind.__name__}, got {token!r}", lineno, source) from None


_ARITY = {
    "map": (2,),
    "cellsize": (1,),
    "background": (3,),
    "wall": (3,),
    "obstacle": (2,),
    "object": (6,),
    "target": (2, 3, 6),
    "robot": (2, 3),
}


def load_scenario(text: str, source: str | None = None) -> SceneModel:
    """Parse scenario-file contents into a validated :class:`SceneModel`.

    Defaults: cellsize 1.0, background and wall mid-grays, target height 0.5
    with no template color, robot at the first free non-target cell.
    """
    size = None
    cellsize = 1.0
    background = DEFAULT_BACKGROUND
    wall = DEFAULT_WALL
    obstacles: list[tuple[int, int, int]] = []
    objects: list[tuple[SceneObject, int]] = []
    target = None
    robot = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, *args = line.split()
        head = head.lower()
        if head not in _ARITY:
            raise ScenarioError(f"unknown directive {head!r}", lineno, source)
        if len(args) not in _ARITY[head]:
            raise ScenarioError(
                f"{head} takes {' or '.join(map(str, _ARITY[head]))} arguments, got {len(args)}",
                lineno, source)
        if head == "map":
            if size is not None:
                raise ScenarioError("duplicate map directive", lineno, source)
            size = (_num(args[0], int, lineno, source), _num(args[1], int, lineno, source))
        elif head == "cellsize":
            cellsize = _num(args[0], float, lineno, source)
        elif head == "background":
            background = _rgb(args, lineno, source)
        elif head == "wall":
            wall = _rgb(args, lineno, source)
        elif head == "obstacle":
            obstacles.append((_num(args[0], int, lineno, source), _num(args[1], int, lineno, source), lineno))
        elif head == "object":
            cell = (_num(args[0], int, lineno, source), _num(args[1], int, lineno, source))
            h = _num(args[2], float, lineno, source)
            objects.append((SceneObject(cell, h, _rgb(args[3:], lineno, source)), lineno))
        elif head == "target":
            if target is not None:
                raise ScenarioError("duplicate target directive", lineno, source)
            cell = (_num(args[0], int, lineno, source), _num(args[1], int, lineno, source))
            h = _num(args[2], float, lineno, source) if len(args) >= 3 else DEFAULT_TARGET_HEIGHT
            color = _rgb(args[3:], lineno, source) if len(args) == 6 else None
            target = (cell, h, color, lineno)
        elif head == "robot":
            x = _num(args[0], float, lineno, source)
            y = _num(args[1], float, lineno, source)
            phi = math.radians(_num(args[2], float, lineno, source)) if len(args) == 3 else 0.0
            robot = RobotState(x, y, phi)

    if size is None:
        raise ScenarioError("missing map directive", source=source)
    if target is None:
        raise ScenarioError("missing target directive", source=source)
    w, h = size
    if w < 2 or h < 2:
        raise ScenarioError("map width and height must be >= 2", source=source)
    occ = np.zeros((h, w), dtype=bool)
    for cx, cy, lineno in obstacles:
        if not (0 <= cx < w and 0 <= cy < h):
            raise ScenarioError(f"obstacle ({cx}, {cy}) is outside the map bounds", lineno, source)
        occ[cy, cx] = True
    cell, th, tcolor, _ = target
    # an uncolored target still renders; it just cannot seed a top-down template
    target_obj = SceneObject(cell, th, tcolor if tcolor is not None else (200, 200, 200), True)
    return SceneModel(
        width=w,
        height=h,
        obstacle=occ,
        objects=tuple(o for o, _ in objects) + (target_obj,),
        target_cell=cell,
        target_color=tcolor,
        cellsize=cellsize,
        background=background,
        wall_color=wall,
        robot=robot,
        name=Path(source).stem if source else "scene",
    )


def load_scenario_file(path) -> SceneModel:
    path = Path(path)
    return load_scenario(path.read_text(encoding="utf-8"), source=str(path))


# ---------------------------------------------------------------------------
# queries


def is_traversable(scene: SceneModel, x: float, y: float) -> bool:
    if not (0.0 <= x < scene.width * scene.cellsize and 0.0 <= y < scene.height * scene.cellsize):
        return False
    cx, cy = scene.cell_of(x, y)
    return not scene.obstacle[cy, cx]


def line_of_sight(scene: SceneModel, s: RobotState, cell: tuple[int, int]) -> bool:
    """True iff the segment from the robot to the cell center crosses no obstacle cell."""
    if not scene.in_bounds(cell):
        raise ValueError(f"cell {cell} outside the map")
    tx, ty = scene.cell_center(cell)
    return bool(_kernels.segment_clear(scene.obstacle, scene.cellsize, s.x, s.y, tx, ty))


def visibility(scene: SceneModel, s: RobotState) -> np.ndarray:
    """(height, width) bool line-of-sight mask from the robot to every cell center."""
    xs, ys = scene.centers
    vis = _kernels.visibility_from(scene.obstacle, scene.cellsize, s.x, s.y, xs, ys)
    return vis.reshape(scene.height, scene.width)


# ---------------------------------------------------------------------------
# rendering


def render_view(scene: SceneModel, s: RobotState, cam: CameraIntrinsics | None = None) -> RenderedView:
    """Raycast one ray per image column; rows encode the hit object's height.

    Each column's ray marches in RAY_STEP increments and stops at the first
    obstacle or object cell (the robot's own cell is skipped). Pixel rows at
    or below the projected top of the hit take its color; everything else is
    background with the no-hit depth.
    """
    cam = cam or CameraIntrinsics()
    if not is_traversable(scene, s.x, s.y):
        raise ValueError("robot state must lie in a free cell")
    n_cols, n_rows = cam.image_width, cam.image_height
    half = math.radians(cam.fov_h) / 2.0
    # column 0 is the leftmost (counter-clockwise) ray
    offsets = half - (np.arange(n_cols) + 0.5) * (2.0 * half / n_cols)
    angles = s.phi + offsets
    n_steps = int(math.floor(cam.max_range / RAY_STEP + 1e-9))
    t = RAY_STEP * np.arange(1, n_steps + 1)
    px = s.x + np.cos(angles)[:, None] * t[None, :]
    py = s.y + np.sin(angles)[:, None] * t[None, :]
    ix = np.floor(px / scene.cellsize).astype(np.int64)
    iy = np.floor(py / scene.cellsize).astype(np.int64)
    inside = (ix >= 0) & (iy >= 0) & (ix < scene.width) & (iy < scene.height)
    ixc = np.clip(ix, 0, scene.width - 1)
    iyc = np.clip(iy, 0, scene.height - 1)
    own = scene.cell_of(s.x, s.y)
    occupied = scene.obstacle[iyc, ixc] | (scene.object_index[iyc, ixc] >= 0)
    occupied &= inside & ~((ixc == own[0]) & (iyc == own[1]))
    # a ray that leaves the map before hitting anything is a no-hit
    stop = occupied | ~inside
    any_stop = stop.any(axis=1)
    first = np.argmax(stop, axis=1)
    rows = np.arange(n_cols)
    hit = any_stop & occupied[rows, first]

    hit_cx = ixc[rows, first]
    hit_cy = iyc[rows, first]
    depth_col = np.where(hit, t[first], cam.no_hit_depth)
    obj = np.where(hit, scene.object_index[hit_cy, hit_cx], -1)
    heights = np.array([o.height for o in scene.objects] + [WALL_HEIGHT])
    colors = np.array([o.color for o in scene.objects] + [scene.wall_color], dtype=np.uint8)
    col_obj = np.where(obj >= 0, obj, len(scene.objects))
    col_height = heights[col_obj]
    col_color = colors[col_obj]

    # pinhole row projection with the vertical FOV implied by the aspect ratio
    focal_v = (n_cols / 2.0) / math.tan(half)
    v_top = n_rows / 2.0 - focal_v * (col_height - cam.camera_height) / depth_col
    row_idx = np.arange(n_rows)[:, None] + 0.5
    covered = (row_idx >= v_top[None, :]) & hit[None, :]

    color = np.empty((n_rows, n_cols, 3), dtype=np.uint8)
    color[...] = np.asarray(scene.background, dtype=np.uint8)
    color[covered] = np.broadcast_to(col_color[None, :, :], (n_rows, n_cols, 3))[covered]
    depth = np.where(covered, depth_col[None, :], cam.no_hit_depth)
    flat = hit_cy * scene.width + hit_cx
    ray_hits = np.where(covered, flat[None, :], -1).astype(np.int64)
    for arr in (color, depth, ray_hits):
        arr.setflags(write=False)
    return RenderedView(color=color, depth=depth, ray_hits=ray_hits, state=s, camera=cam)
