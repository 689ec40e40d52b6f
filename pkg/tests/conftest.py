import pytest

from lib.channels import ChannelFamily
from lib.density import Grid
from tests.helpers import SMALL_GRID


@pytest.fixture
def grid() -> Grid:
    return SMALL_GRID


@pytest.fixture(params=list(ChannelFamily.Kind), ids=lambda k: k.value)
def family(request) -> ChannelFamily:
    return ChannelFamily(request.param, SMALL_GRID)
