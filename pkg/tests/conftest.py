import sys
from functools import lru_cache
from importlib.resources import files
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from tmkit.dsl import parse  # noqa: E402

FIXTURES = ("car.tm", "car_testing.tm", "color_dry.tm", "time.tm")


def fixture_path(name: str) -> Path:
    return Path(str(files("tmkit") / "models" / name))


@lru_cache(maxsize=None)
def load(name: str):
    return parse(fixture_path(name).read_text(encoding="utf-8"))


@pytest.fixture(params=FIXTURES)
def fixture_doc(request):
    return request.param, load(request.param)
