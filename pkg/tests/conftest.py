from __future__ import annotations

import pytest

from spoofprobe.audio import SynthParams
from spoofprobe.corpus import BiasSpec, Manifest, generate_corpus


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory) -> Manifest:
    """8 + 8 items, fully separable artifact, shared across read-only tests."""
    root = tmp_path_factory.mktemp("corpus")
    return generate_corpus(8, 8, SynthParams(artifact_strength=1.0), BiasSpec(), 202, root)
