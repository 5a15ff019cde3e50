"""Robust orientation and in-sphere predicates.

Each predicate runs a cheap floating-point evaluation first, guarded by a
forward error bound on the same expression (the classic static-filter
construction).  When the bound cannot certify the sign, the determinant is
recomputed in exact rational arithmetic (floats are dyadic, so
``fractions.Fraction`` is lossless).

Exact cosphericity ties are broken by a symbolic perturbation of the
lifted (paraboloid) coordinate, keyed on vertex ids: vertex ``i`` gets a
perturbation of magnitude ``eps**(i+1)``, so lower ids dominate.  The
perturbed configuration behaves like a weighted point set in general
position, which keeps incremental insertion consistent on degenerate
inputs (grids, cospherical clusters) without ever returning "zero".
"""

from fractions import Fraction

# Machine epsilon for the filter bounds: 2**-53, the error of one rounding.
_EPS = 2.0 ** -53
_O3D_BOUND = (7.0 + 56.0 * _EPS) * _EPS
_ISP_BOUND = (16.0 + 224.0 * _EPS) * _EPS


def orient3d_det(a, b, c, d):
    """Filtered determinant det(b-a, c-a, d-a) = 6 * signed volume.

    Positive when (a, b, c, d) is positively oriented.  Returns a float
    whose sign is certified; magnitude is only approximate.
    """
    ux = b[0] - a[0]
    uy = b[1] - a[1]
    uz = b[2] - a[2]
    vx = c[0] - a[0]
    vy = c[1] - a[1]
    vz = c[2] - a[2]
    wx = d[0] - a[0]
    wy = d[1] - a[1]
    wz = d[2] - a[2]

    vywz = vy * wz
    vzwy = vz * wy
    vzwx = vz * wx
    vxwz = vx * wz
    vxwy = vx * wy
    vywx = vy * wx

    det = ux * (vywz - vzwy) + uy * (vzwx - vxwz) + uz * (vxwy - vywx)

    permanent = (
        (abs(vywz) + abs(vzwy)) * abs(ux)
        + (abs(vzwx) + abs(vxwz)) * abs(uy)
        + (abs(vxwy) + abs(vywx)) * abs(uz)
    )
    errbound = _O3D_BOUND * permanent
    if det > errbound or -det > errbound:
        return det
    return float(_orient3d_exact(a, b, c, d))


def orient3d(a, b, c, d):
    """Sign of the orientation determinant: +1, 0, or -1 (exact)."""
    det = orient3d_det(a, b, c, d)
    if det > 0.0:
        return 1
    if det < 0.0:
        return -1
    # the filtered path only returns 0.0 from the exact branch
    s = _orient3d_exact(a, b, c, d)
    return 1 if s > 0 else (-1 if s < 0 else 0)


def _orient3d_exact(a, b, c, d):
    """Exact rational orientation determinant (a Fraction)."""
    ax, ay, az = Fraction(a[0]), Fraction(a[1]), Fraction(a[2])
    ux = Fraction(b[0]) - ax
    uy = Fraction(b[1]) - ay
    uz = Fraction(b[2]) - az
    vx = Fraction(c[0]) - ax
    vy = Fraction(c[1]) - ay
    vz = Fraction(c[2]) - az
    wx = Fraction(d[0]) - ax
    wy = Fraction(d[1]) - ay
    wz = Fraction(d[2]) - az
    return (
        ux * (vy * wz - vz * wy)
        + uy * (vz * wx - vx * wz)
        + uz * (vx * wy - vy * wx)
    )


def _in_sphere_raw(a, b, c, d, e):
    """Filtered lifted determinant; sign convention resolved by in_sphere.

    Computes det of rows [p - e, |p - e|^2] for p in (a, b, c, d).
    Returns (value, certified) where certified=False means the float sign
    is not trustworthy.
    """
    aex = a[0] - e[0]
    aey = a[1] - e[1]
    aez = a[2] - e[2]
    bex = b[0] - e[0]
    bey = b[1] - e[1]
    bez = b[2] - e[2]
    cex = c[0] - e[0]
    cey = c[1] - e[1]
    cez = c[2] - e[2]
    dex = d[0] - e[0]
    dey = d[1] - e[1]
    dez = d[2] - e[2]

    ab = aex * bey - bex * aey
    bc = bex * cey - cex * bey
    cd = cex * dey - dex * cey
    da = dex * aey - aex * dey
    ac = aex * cey - cex * aey
    bd = bex * dey - dex * bey

    abc = aez * bc - bez * ac + cez * ab
    bcd = bez * cd - cez * bd + dez * bc
    cda = cez * da + dez * ac + aez * cd
    dab = dez * ab + aez * bd + bez * da

    alift = aex * aex + aey * aey + aez * aez
    blift = bex * bex + bey * bey + bez * bez
    clift = cex * cex + cey * cey + cez * cez
    dlift = dex * dex + dey * dey + dez * dez

    det = (dlift * abc - clift * dab) + (blift * cda - alift * bcd)

    aezp = abs(aez)
    bezp = abs(bez)
    cezp = abs(cez)
    dezp = abs(dez)
    aexbeyp = abs(aex * bey)
    bexaeyp = abs(bex * aey)
    bexceyp = abs(bex * cey)
    cexbeyp = abs(cex * bey)
    cexdeyp = abs(cex * dey)
    dexceyp = abs(dex * cey)
    dexaeyp = abs(dex * aey)
    aexdeyp = abs(aex * dey)
    aexceyp = abs(aex * cey)
    cexaeyp = abs(cex * aey)
    bexdeyp = abs(bex * dey)
    dexbeyp = abs(dex * bey)
    permanent = (
        ((cexdeyp + dexceyp) * bezp + (dexbeyp + bexdeyp) * cezp + (bexceyp + cexbeyp) * dezp) * alift
        + ((dexaeyp + aexdeyp) * cezp + (aexceyp + cexaeyp) * dezp + (cexdeyp + dexceyp) * aezp) * blift
        + ((aexbeyp + bexaeyp) * dezp + (bexdeyp + dexbeyp) * aezp + (dexaeyp + aexdeyp) * bezp) * clift
        + ((bexceyp + cexbeyp) * aezp + (cexaeyp + aexceyp) * bezp + (aexbeyp + bexaeyp) * cezp) * dlift
    )
    errbound = _ISP_BOUND * permanent
    if det > errbound or -det > errbound:
        return det, True
    return det, False


def _in_sphere_exact(a, b, c, d, e):
    """Exact lifted determinant (a Fraction), same row layout as the filter."""
    ex, ey, ez = Fraction(e[0]), Fraction(e[1]), Fraction(e[2])
    rows = []
    for p in (a, b, c, d):
        px = Fraction(p[0]) - ex
        py = Fraction(p[1]) - ey
        pz = Fraction(p[2]) - ez
        rows.append((px, py, pz, px * px + py * py + pz * pz))
    (a0, a1, a2, a3), (b0, b1, b2, b3), (c0, c1, c2, c3), (d0, d1, d2, d3) = rows

    ab = a0 * b1 - b0 * a1
    bc = b0 * c1 - c0 * b1
    cd = c0 * d1 - d0 * c1
    da = d0 * a1 - a0 * d1
    ac = a0 * c1 - c0 * a1
    bd = b0 * d1 - d0 * b1

    abc = a2 * bc - b2 * ac + c2 * ab
    bcd = b2 * cd - c2 * bd + d2 * bc
    cda = c2 * da + d2 * ac + a2 * cd
    dab = d2 * ab + a2 * bd + b2 * da

    return (d3 * abc - c3 * dab) + (b3 * cda - a3 * bcd)


def in_sphere(a, b, c, d, e):
    """+1 if e is strictly inside the circumsphere of the positively
    oriented tetrahedron (a, b, c, d); -1 strictly outside; 0 on it.

    With (a,b,c,d) positively oriented, "inside" corresponds to a
    negative lifted determinant.
    """
    det, ok = _in_sphere_raw(a, b, c, d, e)
    if ok:
        return 1 if det < 0.0 else -1
    s = _in_sphere_exact(a, b, c, d, e)
    return 1 if s < 0 else (-1 if s > 0 else 0)


def in_sphere_perturbed(a, b, c, d, e, ia, ib, ic, id_, ie):
    """in_sphere with symbolic weight perturbation breaking exact ties.

    Never returns 0 for five distinct points forming a valid query (the
    tetrahedron (a,b,c,d) must be non-degenerate).  Vertex ids give the
    perturbation order; the result is globally consistent across calls.
    """
    det, ok = _in_sphere_raw(a, b, c, d, e)
    if ok:
        return 1 if det < 0.0 else -1
    s = _in_sphere_exact(a, b, c, d, e)
    if s < 0:
        return 1
    if s > 0:
        return -1
    # Lifted coordinate of vertex i perturbed by +eps**(i+1).  The
    # determinant is linear in each lifted coordinate; with the exact value
    # zero, its perturbed sign comes from the cofactor of the lowest id
    # whose cofactor is nonzero.  Cofactors reduce to orientation
    # determinants of the other four points (from the 5x5 lifted matrix):
    #   dD/dw_a = +vol6(b,c,d,e)   dD/dw_b = -vol6(a,c,d,e)
    #   dD/dw_c = +vol6(a,b,d,e)   dD/dw_d = -vol6(a,b,c,e)
    #   dD/dw_e = +vol6(a,b,c,d)
    # The last is nonzero for a valid tetrahedron, so the scan terminates.
    # "Inside" is negative determinant, so the result is -sign(cofactor).
    cof = (
        (ia, lambda: _orient3d_exact(b, c, d, e)),
        (ib, lambda: -_orient3d_exact(a, c, d, e)),
        (ic, lambda: _orient3d_exact(a, b, d, e)),
        (id_, lambda: -_orient3d_exact(a, b, c, e)),
        (ie, lambda: _orient3d_exact(a, b, c, d)),
    )
    for _, fn in sorted(cof, key=lambda t: t[0]):
        cval = fn()
        if cval != 0:
            return -1 if cval > 0 else 1
    raise ArithmeticError("degenerate in-sphere query: five coplanar points")
