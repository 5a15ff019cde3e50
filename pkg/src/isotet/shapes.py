"""Procedural triangle meshes used by tests, demos, and the CLI."""

import numpy as np


def cube_mesh(center=(0.0, 0.0, 0.0), half=0.5):
    """Axis-aligned cube as 12 outward-oriented triangles."""
    c = np.asarray(center, dtype=np.float64)
    verts = np.array(
        [[x, y, z] for x in (-half, half) for y in (-half, half) for z in (-half, half)]
    ) + c
    # vertex index = 4*ix + 2*iy + iz
    quads = [
        (0, 1, 3, 2),  # -x
        (4, 6, 7, 5),  # +x
        (0, 4, 5, 1),  # -y
        (2, 3, 7, 6),  # +y
        (0, 2, 6, 4),  # -z
        (1, 5, 7, 3),  # +z
    ]
    tris = []
    for a, b, cc, d in quads:
        tris.append([a, b, cc])
        tris.append([a, cc, d])
    return verts, np.asarray(tris, dtype=np.int64)


def icosphere(subdivisions=2, radius=1.0, center=(0.0, 0.0, 0.0)):
    """Subdivided icosahedron projected to a sphere; watertight."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
        [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
        [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
    ], dtype=np.float64)
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    tris = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ], dtype=np.int64)

    for _ in range(subdivisions):
        vlist = list(verts)
        midpoint = {}

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in midpoint:
                m = vlist[a] + vlist[b]
                m = m / np.linalg.norm(m)
                midpoint[key] = len(vlist)
                vlist.append(m)
            return midpoint[key]

        new_tris = []
        for a, b, c in tris:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_tris += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        verts = np.asarray(vlist)
        tris = np.asarray(new_tris, dtype=np.int64)

    return verts * radius + np.asarray(center, dtype=np.float64), tris


def blob_mesh(subdivisions=4, seed=11, center=(0.0, 0.0, 0.0)):
    """Organic scanned-looking closed surface: an icosphere displaced by a
    deterministic sum of smooth directional lobes."""
    verts, tris = icosphere(subdivisions=subdivisions, radius=1.0)
    rng = np.random.default_rng(seed)
    n_lobes = 7
    dirs = rng.normal(size=(n_lobes, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    amps = rng.uniform(0.05, 0.22, size=n_lobes)
    sharp = rng.uniform(2.0, 9.0, size=n_lobes)
    r = np.ones(len(verts))
    unit = verts / np.linalg.norm(verts, axis=1, keepdims=True)
    for d, a, s in zip(dirs, amps, sharp):
        t = np.clip(unit @ d, -1.0, 1.0)
        r += a * np.exp(s * (t - 1.0))
    r += 0.04 * np.sin(6.0 * unit[:, 0]) * np.sin(5.0 * unit[:, 1])
    return unit * r[:, None] + np.asarray(center, dtype=np.float64), tris


def torus_mesh(major_radius=1.0, minor_radius=0.25, n_major=64, n_minor=24):
    """Watertight torus around the z axis."""
    verts = []
    for i in range(n_major):
        a = 2.0 * np.pi * i / n_major
        ca, sa = np.cos(a), np.sin(a)
        for j in range(n_minor):
            b = 2.0 * np.pi * j / n_minor
            rr = major_radius + minor_radius * np.cos(b)
            verts.append([rr * ca, rr * sa, minor_radius * np.sin(b)])
    tris = []
    for i in range(n_major):
        for j in range(n_minor):
            v00 = i * n_minor + j
            v01 = i * n_minor + (j + 1) % n_minor
            v10 = ((i + 1) % n_major) * n_minor + j
            v11 = ((i + 1) % n_major) * n_minor + (j + 1) % n_minor
            tris.append([v00, v10, v11])
            tris.append([v00, v11, v01])
    return np.asarray(verts, dtype=np.float64), np.asarray(tris, dtype=np.int64)


def quad_mesh(center=(0.0, 0.0, 0.0), size=1.0, normal_axis=2):
    """Planar unit square (two triangles), normal along +axis."""
    h = size / 2.0
    c = np.asarray(center, dtype=np.float64)
    if normal_axis == 2:
        pts = np.array([[-h, -h, 0], [h, -h, 0], [h, h, 0], [-h, h, 0]])
    elif normal_axis == 1:
        pts = np.array([[-h, 0, h], [h, 0, h], [h, 0, -h], [-h, 0, -h]])
    else:
        pts = np.array([[0, -h, -h], [0, h, -h], [0, h, h], [0, -h, h]])
    tris = np.array([[0, 1, 2], [0, 2, 3]], dtype=np.int64)
    return pts + c, tris
