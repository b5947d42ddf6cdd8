import numpy as np
import pytest

from momagen.demo import load_source
from momagen.robot import RobotModel

from pathlib import Path

ASSETS = Path(__file__).parent.parent / "src" / "momagen" / "assets"


@pytest.fixture(scope="session")
def r1():
    return RobotModel.load(ASSETS / "robots" / "r1_like.json")


@pytest.fixture(scope="session")
def t_like():
    return RobotModel.load(ASSETS / "robots" / "t_like.json")


@pytest.fixture(scope="session")
def pick_cup_src():
    return load_source(ASSETS / "demos" / "pick_cup.demo.json")


@pytest.fixture(scope="session")
def tidy_table_src():
    return load_source(ASSETS / "demos" / "tidy_table.demo.json")


@pytest.fixture(scope="session")
def all_sources():
    return {name: load_source(ASSETS / "demos" / f"{name}.demo.json")
            for name in ("pick_cup", "tidy_table", "put_dishes_away",
                         "clean_pan")}


@pytest.fixture
def rng():
    return np.random.default_rng(0)
