"""OBJ and binary PLY mesh readers/writers.

Only positions and triangle connectivity are honored; other attributes
are skipped.  Writers emit deterministic bytes for identical inputs.
"""

import struct
from pathlib import Path

import numpy as np

from .errors import ConfigError


def read_obj(path):
    verts = []
    tris = []
    with open(path, "r", errors="replace") as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(parts[1]), float(parts[2]), float(parts[3])])
            elif parts[0] == "f":
                idx = []
                for tok in parts[1:]:
                    i = int(tok.split("/")[0])
                    idx.append(i - 1 if i > 0 else len(verts) + i)
                for k in range(1, len(idx) - 1):
                    tris.append([idx[0], idx[k], idx[k + 1]])
    if not verts:
        raise ConfigError(f"no vertices in OBJ file {path}")
    return np.asarray(verts, dtype=np.float64), np.asarray(tris, dtype=np.int64).reshape(-1, 3)


def write_obj(path, verts, tris, normals=None):
    with open(path, "w") as fh:
        for v in np.asarray(verts, dtype=np.float64):
            fh.write(f"v {v[0]:.17g} {v[1]:.17g} {v[2]:.17g}\n")
        if normals is not None:
            for n in np.asarray(normals, dtype=np.float64):
                fh.write(f"vn {n[0]:.17g} {n[1]:.17g} {n[2]:.17g}\n")
            for t in np.asarray(tris, dtype=np.int64):
                fh.write(
                    f"f {t[0]+1}//{t[0]+1} {t[1]+1}//{t[1]+1} {t[2]+1}//{t[2]+1}\n"
                )
        else:
            for t in np.asarray(tris, dtype=np.int64):
                fh.write(f"f {t[0]+1} {t[1]+1} {t[2]+1}\n")


def write_ply(path, verts, tris, normals=None):
    """Binary little-endian PLY."""
    verts = np.asarray(verts, dtype=np.float64)
    tris = np.asarray(tris, dtype=np.int64)
    header = ["ply", "format binary_little_endian 1.0",
              f"element vertex {len(verts)}",
              "property double x", "property double y", "property double z"]
    if normals is not None:
        header += ["property double nx", "property double ny", "property double nz"]
    header += [f"element face {len(tris)}",
               "property list uchar int vertex_indices", "end_header"]
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        if normals is not None:
            data = np.hstack([verts, np.asarray(normals, dtype=np.float64)])
        else:
            data = verts
        fh.write(data.astype("<f8").tobytes())
        for t in tris:
            fh.write(struct.pack("<Biii", 3, int(t[0]), int(t[1]), int(t[2])))


def read_ply(path):
    with open(path, "rb") as fh:
        data = fh.read()
    end = data.find(b"end_header\n")
    if end < 0:
        raise ConfigError(f"not a PLY file: {path}")
    header = data[:end].decode("ascii", errors="replace").splitlines()
    body = data[end + len(b"end_header\n"):]

    fmt = None
    n_vert = n_face = 0
    vert_props = []
    in_elem = None
    for line in header:
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "format":
            fmt = parts[1]
        elif parts[0] == "element":
            in_elem = parts[1]
            if parts[1] == "vertex":
                n_vert = int(parts[2])
            elif parts[1] == "face":
                n_face = int(parts[2])
        elif parts[0] == "property" and in_elem == "vertex":
            vert_props.append((parts[1], parts[-1]))

    sizes = {"char": 1, "uchar": 1, "int8": 1, "uint8": 1,
             "short": 2, "ushort": 2, "int16": 2, "uint16": 2,
             "int": 4, "uint": 4, "int32": 4, "uint32": 4,
             "float": 4, "float32": 4, "double": 8, "float64": 8}
    np_types = {"float": "<f4", "float32": "<f4", "double": "<f8", "float64": "<f8"}

    if fmt == "ascii":
        text = body.decode("ascii", errors="replace").split("\n")
        verts = np.array(
            [[float(x) for x in text[i].split()[:3]] for i in range(n_vert)]
        )
        tris = []
        for i in range(n_vert, n_vert + n_face):
            parts = text[i].split()
            cnt = int(parts[0])
            idx = [int(x) for x in parts[1:1 + cnt]]
            for k in range(1, cnt - 1):
                tris.append([idx[0], idx[k], idx[k + 1]])
        return verts, np.asarray(tris, dtype=np.int64).reshape(-1, 3)

    if fmt != "binary_little_endian":
        raise ConfigError(f"unsupported PLY format {fmt!r}")

    stride = sum(sizes[t] for _, t in vert_props)
    verts = np.zeros((n_vert, 3))
    offset = 0
    col = {"x": 0, "y": 1, "z": 2}
    prop_off = 0
    for name, typ in vert_props:
        if name in col:
            if typ not in np_types:
                raise ConfigError("PLY vertex coordinates must be float/double")
            raw = np.frombuffer(body, dtype=np.uint8, count=n_vert * stride)
            raw = raw.reshape(n_vert, stride)
            width = sizes[typ]
            verts[:, col[name]] = (
                raw[:, prop_off:prop_off + width].copy().view(np_types[typ]).reshape(-1)
            )
        prop_off += sizes[typ]
    offset = n_vert * stride

    tris = []
    pos = offset
    for _ in range(n_face):
        cnt = body[pos]
        pos += 1
        idx = struct.unpack_from(f"<{cnt}i", body, pos)
        pos += 4 * cnt
        for k in range(1, cnt - 1):
            tris.append([idx[0], idx[k], idx[k + 1]])
    return verts, np.asarray(tris, dtype=np.int64).reshape(-1, 3)


def load_mesh(path):
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".obj":
        return read_obj(path)
    if suffix == ".ply":
        return read_ply(path)
    raise ConfigError(f"unsupported mesh format {suffix!r} (use .obj or .ply)")


def save_mesh(path, verts, tris, normals=None):
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".obj":
        write_obj(path, verts, tris, normals)
    elif suffix == ".ply":
        write_ply(path, verts, tris, normals)
    else:
        raise ConfigError(f"unsupported mesh format {suffix!r} (use .obj or .ply)")
