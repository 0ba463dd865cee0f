import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from fx_helpers import write_image  # noqa: E402

from featx import ExtractorConfig  # noqa: E402


@pytest.fixture
def config():
    return ExtractorConfig(seed=11)


@pytest.fixture
def image_path(tmp_path):
    p = tmp_path / "img.png"
    write_image(p, seed=1)
    return p
