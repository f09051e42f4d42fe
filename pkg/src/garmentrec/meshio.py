"""OBJ mesh I/O and XYZ / ascii-PLY point-cloud I/O."""

from __future__ import annotations

import os

import numpy as np

from .mesh import Mesh, PointCloud


def write_obj(path: str | os.PathLike, mesh: Mesh, normals: np.ndarray | None = None):
    with open(path, "w") as fh:
        for v in mesh.vertices:
            fh.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        if normals is not None:
            for n in normals:
                fh.write(f"vn {n[0]:.9g} {n[1]:.9g} {n[2]:.9g}\n")
        for f in mesh.faces:
            if normals is not None:
                fh.write(f"f {f[0]+1}//{f[0]+1} {f[1]+1}//{f[1]+1} {f[2]+1}//{f[2]+1}\n")
            else:
                fh.write(f"f {f[0]+1} {f[1]+1} {f[2]+1}\n")


def read_obj(path: str | os.PathLike) -> Mesh:
    verts, faces = [], []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                idx = [int(p.split("/")[0]) - 1 for p in parts[1:]]
                # fan-triangulate polygons defensively; writer emits triangles
                for k in range(1, len(idx) - 1):
                    faces.append([idx[0], idx[k], idx[k + 1]])
    return Mesh(np.asarray(verts), np.asarray(faces, dtype=np.int64))


def write_xyz(path: str | os.PathLike, cloud: PointCloud):
    cols = [cloud.points]
    if cloud.normals is not None:
        cols.append(cloud.normals)
    np.savetxt(path, np.hstack(cols), fmt="%.9g")


def read_xyz(path: str | os.PathLike) -> PointCloud:
    data = np.loadtxt(path, ndmin=2)
    if data.shape[1] >= 6:
        return PointCloud(data[:, :3], data[:, 3:6])
    return PointCloud(data[:, :3])


def write_ply(path: str | os.PathLike, cloud: PointCloud):
    has_n = cloud.normals is not None
    with open(path, "w") as fh:
        fh.write("ply\nformat ascii 1.0\n")
        fh.write(f"element vertex {len(cloud)}\n")
        fh.write("property float x\nproperty float y\nproperty float z\n")
        if has_n:
            fh.write("property float nx\nproperty float ny\nproperty float nz\n")
        fh.write("end_header\n")
        rows = np.hstack([cloud.points, cloud.normals]) if has_n else cloud.points
        for r in rows:
            fh.write(" ".join(f"{x:.9g}" for x in r) + "\n")


def read_ply(path: str | os.PathLike) -> PointCloud:
    with open(path) as fh:
        line = fh.readline().strip()
        if line != "ply":
            raise ValueError("not a PLY file")
        n = 0
        props: list[str] = []
        while True:
            line = fh.readline()
            if not line:
                raise ValueError("truncated PLY header")
            parts = line.split()
            if parts[0] == "element" and parts[1] == "vertex":
                n = int(parts[2])
            elif parts[0] == "property" and len(parts) == 3:
                props.append(parts[2])
            elif parts[0] == "format" and parts[1] != "ascii":
                raise ValueError("only ascii PLY is supported")
            elif parts[0] == "end_header":
                break
        data = np.array([[float(x) for x in fh.readline().split()] for _ in range(n)])
    cols = {p: i for i, p in enumerate(props)}
    pts = data[:, [cols["x"], cols["y"], cols["z"]]]
    if "nx" in cols:
        return PointCloud(pts, data[:, [cols["nx"], cols["ny"], cols["nz"]]])
    return PointCloud(pts)
