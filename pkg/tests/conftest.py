import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from bench_fixture import build_benchmark_fixture  # noqa: E402


@pytest.fixture
def benchmark_fixture(tmp_path):
    return build_benchmark_fixture(tmp_path)
