from __future__ import annotations

import numpy as np
import pytest

from dualpack.fixtures import FixtureSpec, fixture_object, generate_fixture
from dualpack.mesh_io import SceneNode, SceneObject, TriangleMesh


def scene(meshes, source="test") -> SceneObject:
    return SceneObject([SceneNode(f"part{i}", m) for i, m in enumerate(meshes)], source=source)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def fixture_dir(tmp_path_factory):
    """The default mesh fixture set written as GLB files."""
    from dualpack.fixtures import default_fixture_set, emit_fixture

    d = tmp_path_factory.mktemp("fixtures")
    for name, spec in default_fixture_set().items():
        emit_fixture(spec, d / f"{name}.glb")
    return d
