"""Shared test fixtures."""

from __future__ import annotations

import pytest

from agricurate.fixture import build_corpus


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    """The bundled 50-image synthetic corpus, built once per session."""
    root = tmp_path_factory.mktemp("corpus")
    return build_corpus(root)
