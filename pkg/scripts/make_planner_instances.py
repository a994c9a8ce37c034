"""Regenerate the small planner benchmark instances shipped with the package.

Each instance is a scenario file of at most 8 x 8 cells with scattered
obstacles, a target and a robot pose. Usage: python scripts/make_planner_instances.py
"""
from pathlib import Path

import numpy as np

from avsearch.scene import line_of_sight, load_scenario

OUT = Path(__file__).resolve().parents[1] / "src" / "avsearch" / "data" / "planner_instances"
COUNT = 20


def make(index: int, rng: np.random.Generator) -> str:
    while True:
        w, h = (int(v) for v in rng.integers(4, 9, 2))
        cells = [(x, y) for y in range(h) for x in range(w)]
        order = rng.permutation(len(cells))
        n_obs = int(rng.uniform(0.05, 0.2) * len(cells))
        obstacles = [cells[i] for i in order[:n_obs]]
        free = [cells[i] for i in order[n_obs:]]
        target, start = free[0], free[1]
        phi = int(rng.integers(-179, 181))
        lines = [f"# planner instance {index:02d}", f"map {w} {h}"]
        lines += [f"obstacle {x} {y}" for x, y in sorted(obstacles)]
        lines.append(f"target {target[0]} {target[1]} 0.5 220 20 20")
        lines.append(f"robot {start[0] + 0.5} {start[1] + 0.5} {phi}")
        text = "\n".join(lines) + "\n"
        scene = load_scenario(text)
        # keep instances where the target starts hidden or far, so planning matters
        s = scene.start_state()
        if not line_of_sight(scene, s, target) or abs(target[0] - start[0]) + abs(target[1] - start[1]) >= 3:
            return text


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(20240611)
    for i in range(COUNT):
        (OUT / f"instance{i:02d}.txt").write_text(make(i, rng))


if __name__ == "__main__":
    main()
