"""OBJ / XYZ / PLY round-trips."""

import numpy as np
import pytest

from garmentrec.mesh import Mesh, PointCloud
from garmentrec.meshio import (read_obj, read_ply, read_xyz, write_obj,
                               write_ply, write_xyz)


def _cloud(with_normals: bool) -> PointCloud:
    rng = np.random.Generator(np.random.Philox(key=11))
    pts = rng.normal(size=(20, 3))
    if not with_normals:
        return PointCloud(pts)
    n = rng.normal(size=(20, 3))
    return PointCloud(pts, n / np.linalg.norm(n, axis=1, keepdims=True))


def test_obj_roundtrip(tmp_path):
    rng = np.random.Generator(np.random.Philox(key=5))
    mesh = Mesh(rng.normal(size=(10, 3)), [[0, 1, 2], [3, 4, 5], [6, 7, 8]])
    path = tmp_path / "m.obj"
    write_obj(path, mesh)
    back = read_obj(path)
    np.testing.assert_allclose(back.vertices, mesh.vertices, rtol=1e-8)
    np.testing.assert_array_equal(back.faces, mesh.faces)


def test_obj_roundtrip_with_normals(tmp_path):
    mesh = Mesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])
    path = tmp_path / "m.obj"
    write_obj(path, mesh, normals=np.tile([0.0, 0.0, 1.0], (3, 1)))
    back = read_obj(path)
    np.testing.assert_allclose(back.vertices, mesh.vertices)
    np.testing.assert_array_equal(back.faces, mesh.faces)


def test_obj_reader_fan_triangulates_quads(tmp_path):
    path = tmp_path / "quad.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
    mesh = read_obj(path)
    assert mesh.n_faces == 2
    np.testing.assert_array_equal(mesh.faces, [[0, 1, 2], [0, 2, 3]])


@pytest.mark.parametrize("with_normals", [False, True])
def test_xyz_roundtrip(tmp_path, with_normals):
    cloud = _cloud(with_normals)
    path = tmp_path / "c.xyz"
    write_xyz(path, cloud)
    back = read_xyz(path)
    np.testing.assert_allclose(back.points, cloud.points, rtol=1e-8)
    if with_normals:
        np.testing.assert_allclose(back.normals, cloud.normals, atol=1e-6)
    else:
        assert back.normals is None


@pytest.mark.parametrize("with_normals", [False, True])
def test_ply_roundtrip(tmp_path, with_normals):
    cloud = _cloud(with_normals)
    path = tmp_path / "c.ply"
    write_ply(path, cloud)
    back = read_ply(path)
    np.testing.assert_allclose(back.points, cloud.points, rtol=1e-8)
    if with_normals:
        np.testing.assert_allclose(back.normals, cloud.normals, atol=1e-6)
    else:
        assert back.normals is None


def test_ply_reader_rejects_non_ply(tmp_path):
    path = tmp_path / "bad.ply"
    path.write_text("not a ply\n")
    with pytest.raises(ValueError):
        read_ply(path)
