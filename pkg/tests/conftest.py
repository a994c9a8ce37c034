from pathlib import Path

import pytest

from avsearch.scene import load_scenario, load_scenario_file

DATA = Path(__file__).resolve().parents[1] / "src" / "avsearch" / "data"
SCENARIOS = DATA / "scenarios"


def grid_text(width, height, target=(0, 0), obstacles=(), objects=(), robot=None,
              target_color=(220, 20, 20), target_height=0.5, background=None):
    lines = [f"map {width} {height}"]
    if background is not None:
        lines.append("background {} {} {}".format(*background))
    lines += [f"obstacle {cx} {cy}" for cx, cy in obstacles]
    lines += ["object {} {} {} {} {} {}".format(*o) for o in objects]
    if target_color is None:
        lines.append(f"target {target[0]} {target[1]} {target_height}")
    else:
        lines.append("target {} {} {} {} {} {}".format(*target, target_height, *target_color))
    if robot is not None:
        lines.append("robot {} {} {}".format(*robot))
    return "\n".join(lines) + "\n"


def make_scene(*args, **kwargs):
    return load_scenario(grid_text(*args, **kwargs))


@pytest.fixture(scope="session")
def office():
    return load_scenario_file(SCENARIOS / "office_20x20.txt")


@pytest.fixture(scope="session")
def minimal():
    return load_scenario_file(SCENARIOS / "minimal_5x5.txt")


# acceptance outcomes, echoed in the terminal summary
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
