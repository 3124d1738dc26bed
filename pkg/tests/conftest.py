from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from morevqa.corpus import build_oracle_corpus, write_corpus  # noqa: E402
from morevqa.tools import MockBackend  # noqa: E402


@pytest.fixture(scope="session")
def oracle_bundle():
    return build_oracle_corpus(seed=0)


@pytest.fixture(scope="session")
def oracle_dir(oracle_bundle, tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    write_corpus(oracle_bundle, out)
    return out


@pytest.fixture(scope="session")
def mock_backend(oracle_bundle):
    return MockBackend(oracle_bundle.fixtures)
