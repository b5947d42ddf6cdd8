"""Hot numeric kernels: pairwise signed distances and ray casting.

Shapes are packed into flat arrays so the inner loops stay allocation-free:
    kinds: int64 (n,)    0 = sphere, 1 = capsule, 2 = box
    params: float64 (n, 3)   sphere (r,-,-), capsule (r, half_len,-), box half-extents
    pos: float64 (n, 3)      world position
    quat: float64 (n, 4)     world orientation, scalar-first (w,x,y,z)

Capsule axis is local +z. All distances are signed: negative means penetration.

When numba is importable (and MOMAGEN_PURE_NUMPY is unset) every function
below is nopython-compiled; otherwise the identical Python code runs as-is,
so both backends produce bit-identical results.
"""

import math
import os

import numpy as np

NUMBA_ENABLED = False
if not os.environ.get("MOMAGEN_PURE_NUMPY"):
    try:
        from numba import njit

        NUMBA_ENABLED = True
    except ImportError:
        pass

if NUMBA_ENABLED:
    def _jit(f):
        return njit(cache=True)(f)
else:
    def _jit(f):
        return f


@_jit
def _rot(qw, qx, qy, qz, vx, vy, vz):
    # q * v * q^-1 expanded
    tx = 2.0 * (qy * vz - qz * vy)
    ty = 2.0 * (qz * vx - qx * vz)
    tz = 2.0 * (qx * vy - qy * vx)
    rx = vx + qw * tx + (qy * tz - qz * ty)
    ry = vy + qw * ty + (qz * tx - qx * tz)
    rz = vz + qw * tz + (qx * ty - qy * tx)
    return rx, ry, rz


@_jit
def _rot_inv(qw, qx, qy, qz, vx, vy, vz):
    return _rot(qw, -qx, -qy, -qz, vx, vy, vz)


@_jit
def _point_seg_dist(px, py, pz, ax, ay, az, bx, by, bz):
    dx = bx - ax
    dy = by - ay
    dz = bz - az
    dd = dx * dx + dy * dy + dz * dz
    if dd < 1e-18:
        t = 0.0
    else:
        t = ((px - ax) * dx + (py - ay) * dy + (pz - az) * dz) / dd
        if t < 0.0:
            t = 0.0
        elif t > 1.0:
            t = 1.0
    cx = ax + t * dx - px
    cy = ay + t * dy - py
    cz = az + t * dz - pz
    return math.sqrt(cx * cx + cy * cy + cz * cz)


@_jit
def _seg_seg_dist(p1x, p1y, p1z, q1x, q1y, q1z, p2x, p2y, p2z, q2x, q2y, q2z):
    # Ericson, Real-Time Collision Detection 5.1.9
    d1x = q1x - p1x
    d1y = q1y - p1y
    d1z = q1z - p1z
    d2x = q2x - p2x
    d2y = q2y - p2y
    d2z = q2z - p2z
    rx = p1x - p2x
    ry = p1y - p2y
    rz = p1z - p2z
    a = d1x * d1x + d1y * d1y + d1z * d1z
    e = d2x * d2x + d2y * d2y + d2z * d2z
    f = d2x * rx + d2y * ry + d2z * rz
    if a < 1e-18 and e < 1e-18:
        s = 0.0
        t = 0.0
    elif a < 1e-18:
        s = 0.0
        t = min(max(f / e, 0.0), 1.0)
    else:
        c = d1x * rx + d1y * ry + d1z * rz
        if e < 1e-18:
            t = 0.0
            s = min(max(-c / a, 0.0), 1.0)
        else:
            b = d1x * d2x + d1y * d2y + d1z * d2z
            denom = a * e - b * b
            if denom > 1e-18:
                s = min(max((b * f - c * e) / denom, 0.0), 1.0)
            else:
                s = 0.0
            t = (b * s + f) / e
            if t < 0.0:
                t = 0.0
                s = min(max(-c / a, 0.0), 1.0)
            elif t > 1.0:
                t = 1.0
                s = min(max((b - c) / a, 0.0), 1.0)
    c1x = p1x + s * d1x
    c1y = p1y + s * d1y
    c1z = p1z + s * d1z
    c2x = p2x + t * d2x
    c2y = p2y + t * d2y
    c2z = p2z + t * d2z
    dx = c1x - c2x
    dy = c1y - c2y
    dz = c1z - c2z
    return math.sqrt(dx * dx + dy * dy + dz * dz)


@_jit
def _sdf_point_box(px, py, pz, hx, hy, hz):
    # Signed distance from a point (box-local frame) to a solid box.
    qx = abs(px) - hx
    qy = abs(py) - hy
    qz = abs(pz) - hz
    ox = max(qx, 0.0)
    oy = max(qy, 0.0)
    oz = max(qz, 0.0)
    outside = math.sqrt(ox * ox + oy * oy + oz * oz)
    inside = min(max(qx, max(qy, qz)), 0.0)
    return outside + inside


@_jit
def _seg_box_sdf(ax, ay, az, bx, by, bz, hx, hy, hz):
    # min over t of sdf(A + t(B-A), box); the box sdf is convex, so ternary
    # search on [0,1] converges to the global minimum.
    lo = 0.0
    hi = 1.0
    for _ in range(64):
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        f1 = _sdf_point_box(ax + m1 * (bx - ax), ay + m1 * (by - ay),
                            az + m1 * (bz - az), hx, hy, hz)
        f2 = _sdf_point_box(ax + m2 * (bx - ax), ay + m2 * (by - ay),
                            az + m2 * (bz - az), hx, hy, hz)
        if f1 < f2:
            hi = m2
        else:
            lo = m1
    t = 0.5 * (lo + hi)
    fa = _sdf_point_box(ax, ay, az, hx, hy, hz)
    fb = _sdf_point_box(bx, by, bz, hx, hy, hz)
    fm = _sdf_point_box(ax + t * (bx - ax), ay + t * (by - ay),
                        az + t * (bz - az), hx, hy, hz)
    return min(fm, min(fa, fb))


@_jit
def _capsule_endpoints(params, pos, quat, i):
    hl = params[i, 1]
    ax, ay, az = _rot(quat[i, 0], quat[i, 1], quat[i, 2], quat[i, 3], 0.0, 0.0, hl)
    return (pos[i, 0] - ax, pos[i, 1] - ay, pos[i, 2] - az,
            pos[i, 0] + ax, pos[i, 1] + ay, pos[i, 2] + az)


@_jit
def _to_box_local(params, pos, quat, bi, px, py, pz):
    return _rot_inv(quat[bi, 0], quat[bi, 1], quat[bi, 2], quat[bi, 3],
                    px - pos[bi, 0], py - pos[bi, 1], pz - pos[bi, 2])


@_jit
def _box_corner(hx, hy, hz, c):
    sx = -1.0 if c & 1 else 1.0
    sy = -1.0 if c & 2 else 1.0
    sz = -1.0 if c & 4 else 1.0
    return sx * hx, sy * hy, sz * hz


@_jit
def _box_box_dist(params, pos, quat, i, j):
    # Conservative: min over (edges of i vs solid j) and (edges of j vs solid i)
    # plus face centers. May under-report clearance, never reports separation
    # while penetrating.
    best = math.inf
    for a in range(2):
        bi = j if a == 0 else i
        si = i if a == 0 else j
        hxs = params[si, 0]
        hys = params[si, 1]
        hzs = params[si, 2]
        hxb = params[bi, 0]
        hyb = params[bi, 1]
        hzb = params[bi, 2]
        # 12 edges of the source box, expressed as corner pairs
        for c0 in range(8):
            for axis in range(3):
                c1 = c0 | (1 << axis)
                if c1 == c0:
                    continue
                e0x, e0y, e0z = _box_corner(hxs, hys, hzs, c0)
                e1x, e1y, e1z = _box_corner(hxs, hys, hzs, c1)
                # to world
                w0x, w0y, w0z = _rot(quat[si, 0], quat[si, 1], quat[si, 2], quat[si, 3], e0x, e0y, e0z)
                w1x, w1y, w1z = _rot(quat[si, 0], quat[si, 1], quat[si, 2], quat[si, 3], e1x, e1y, e1z)
                w0x += pos[si, 0]
                w0y += pos[si, 1]
                w0z += pos[si, 2]
                w1x += pos[si, 0]
                w1y += pos[si, 1]
                w1z += pos[si, 2]
                l0x, l0y, l0z = _to_box_local(params, pos, quat, bi, w0x, w0y, w0z)
                l1x, l1y, l1z = _to_box_local(params, pos, quat, bi, w1x, w1y, w1z)
                d = _seg_box_sdf(l0x, l0y, l0z, l1x, l1y, l1z, hxb, hyb, hzb)
                if d < best:
                    best = d
        # 6 face centers
        for axis in range(3):
            for sgn in (-1.0, 1.0):
                fx = sgn * hxs if axis == 0 else 0.0
                fy = sgn * hys if axis == 1 else 0.0
                fz = sgn * hzs if axis == 2 else 0.0
                wx, wy, wz = _rot(quat[si, 0], quat[si, 1], quat[si, 2], quat[si, 3], fx, fy, fz)
                lx, ly, lz = _to_box_local(params, pos, quat, bi,
                                           wx + pos[si, 0], wy + pos[si, 1], wz + pos[si, 2])
                d = _sdf_point_box(lx, ly, lz, hxb, hyb, hzb)
                if d < best:
                    best = d
    return best


@_jit
def pair_dist(kinds, params, pos, quat, i, j):
    """Signed distance between shapes i and j of a packed shape set."""
    ki = kinds[i]
    kj = kinds[j]
    if ki > kj:
        i, j = j, i
        ki, kj = kj, ki
    if ki == 0 and kj == 0:
        dx = pos[i, 0] - pos[j, 0]
        dy = pos[i, 1] - pos[j, 1]
        dz = pos[i, 2] - pos[j, 2]
        return math.sqrt(dx * dx + dy * dy + dz * dz) - params[i, 0] - params[j, 0]
    if ki == 0 and kj == 1:
        ax, ay, az, bx, by, bz = _capsule_endpoints(params, pos, quat, j)
        d = _point_seg_dist(pos[i, 0], pos[i, 1], pos[i, 2], ax, ay, az, bx, by, bz)
        return d - params[i, 0] - params[j, 0]
    if ki == 0 and kj == 2:
        lx, ly, lz = _to_box_local(params, pos, quat, j, pos[i, 0], pos[i, 1], pos[i, 2])
        return _sdf_point_box(lx, ly, lz, params[j, 0], params[j, 1], params[j, 2]) - params[i, 0]
    if ki == 1 and kj == 1:
        a1x, a1y, a1z, b1x, b1y, b1z = _capsule_endpoints(params, pos, quat, i)
        a2x, a2y, a2z, b2x, b2y, b2z = _capsule_endpoints(params, pos, quat, j)
        d = _seg_seg_dist(a1x, a1y, a1z, b1x, b1y, b1z, a2x, a2y, a2z, b2x, b2y, b2z)
        return d - params[i, 0] - params[j, 0]
    if ki == 1 and kj == 2:
        ax, ay, az, bx, by, bz = _capsule_endpoints(params, pos, quat, i)
        l0x, l0y, l0z = _to_box_local(params, pos, quat, j, ax, ay, az)
        l1x, l1y, l1z = _to_box_local(params, pos, quat, j, bx, by, bz)
        d = _seg_box_sdf(l0x, l0y, l0z, l1x, l1y, l1z, params[j, 0], params[j, 1], params[j, 2])
        return d - params[i, 0]
    return _box_box_dist(params, pos, quat, i, j)


@_jit
def pair_distances(kinds, params, pos, quat, pairs, out):
    for n in range(pairs.shape[0]):
        out[n] = pair_dist(kinds, params, pos, quat, pairs[n, 0], pairs[n, 1])
    return out


@_jit
def first_violation(kinds, params, pos, quat, pairs, margins):
    """Index of the first pair whose clearance is below its margin, else -1."""
    for n in range(pairs.shape[0]):
        d = pair_dist(kinds, params, pos, quat, pairs[n, 0], pairs[n, 1])
        if d < margins[n]:
            return n
    return -1


@_jit
def _ray_sphere(ox, oy, oz, dx, dy, dz, cx, cy, cz, r):
    mx = ox - cx
    my = oy - cy
    mz = oz - cz
    b = mx * dx + my * dy + mz * dz
    c = mx * mx + my * my + mz * mz - r * r
    if c > 0.0 and b > 0.0:
        return math.inf
    disc = b * b - c
    if disc < 0.0:
        return math.inf
    t = -b - math.sqrt(disc)
    if t < 0.0:
        t = 0.0
    return t


@_jit
def _ray_box_local(ox, oy, oz, dx, dy, dz, hx, hy, hz):
    tmin = -math.inf
    tmax = math.inf
    for axis in range(3):
        if axis == 0:
            o = ox
            d = dx
            h = hx
        elif axis == 1:
            o = oy
            d = dy
            h = hy
        else:
            o = oz
            d = dz
            h = hz
        if abs(d) < 1e-15:
            if o < -h or o > h:
                return math.inf
        else:
            t1 = (-h - o) / d
            t2 = (h - o) / d
            if t1 > t2:
                t1, t2 = t2, t1
            if t1 > tmin:
                tmin = t1
            if t2 < tmax:
                tmax = t2
            if tmin > tmax:
                return math.inf
    if tmax < 0.0:
        return math.inf
    if tmin < 0.0:
        return 0.0
    return tmin


@_jit
def _ray_capsule(ox, oy, oz, dx, dy, dz, ax, ay, az, bx, by, bz, r):
    # infinite-cylinder quadratic restricted to the segment, plus end caps
    ux = bx - ax
    uy = by - ay
    uz = bz - az
    uu = ux * ux + uy * uy + uz * uz
    best = math.inf
    if uu > 1e-18:
        wx = ox - ax
        wy = oy - ay
        wz = oz - az
        du = dx * ux + dy * uy + dz * uz
        wu = wx * ux + wy * uy + wz * uz
        a = 1.0 - du * du / uu
        b = dx * wx + dy * wy + dz * wz - du * wu / uu
        c = wx * wx + wy * wy + wz * wz - wu * wu / uu - r * r
        if abs(a) > 1e-15:
            disc = b * b - a * c
            if disc >= 0.0:
                sq = math.sqrt(disc)
                for sgn in (-1.0, 1.0):
                    t = (-b + sgn * sq) / a
                    if t >= 0.0:
                        s = (wu + t * du) / uu
                        if 0.0 <= s <= 1.0 and t < best:
                            best = t
    t1 = _ray_sphere(ox, oy, oz, dx, dy, dz, ax, ay, az, r)
    if t1 < best:
        best = t1
    t2 = _ray_sphere(ox, oy, oz, dx, dy, dz, bx, by, bz, r)
    if t2 < best:
        best = t2
    # origin inside the capsule counts as an immediate hit
    d0 = _point_seg_dist(ox, oy, oz, ax, ay, az, bx, by, bz)
    if d0 <= r:
        best = 0.0
    return best


@_jit
def ray_cast(ox, oy, oz, dx, dy, dz, kinds, params, pos, quat, skip):
    """Nearest intersection along a ray. Returns (index, distance); index -1 on miss.

    Shapes whose index appears in `skip` (int64 array) are ignored.
    """
    best = math.inf
    best_i = -1
    for i in range(kinds.shape[0]):
        skipped = False
        for s in range(skip.shape[0]):
            if skip[s] == i:
                skipped = True
                break
        if skipped:
            continue
        k = kinds[i]
        if k == 0:
            t = _ray_sphere(ox, oy, oz, dx, dy, dz, pos[i, 0], pos[i, 1], pos[i, 2], params[i, 0])
        elif k == 1:
            ax, ay, az, bx, by, bz = _capsule_endpoints(params, pos, quat, i)
            t = _ray_capsule(ox, oy, oz, dx, dy, dz, ax, ay, az, bx, by, bz, params[i, 0])
        else:
            lox, loy, loz = _to_box_local(params, pos, quat, i, ox, oy, oz)
            ldx, ldy, ldz = _rot_inv(quat[i, 0], quat[i, 1], quat[i, 2], quat[i, 3], dx, dy, dz)
            t = _ray_box_local(lox, loy, loz, ldx, ldy, ldz,
                               params[i, 0], params[i, 1], params[i, 2])
        if t < best:
            best = t
            best_i = i
    return best_i, best


@_jit
def count_unoccluded(cam, points, kinds, params, pos, quat, skip):
    """How many of `points` have a clear line of sight from `cam`.

    Occluders closer than the point (minus a 1e-6 slack) block it.
    """
    n_vis = 0
    for p in range(points.shape[0]):
        dx = points[p, 0] - cam[0]
        dy = points[p, 1] - cam[1]
        dz = points[p, 2] - cam[2]
        dist = math.sqrt(dx * dx + dy * dy + dz * dz)
        if dist < 1e-9:
            n_vis += 1
            continue
        dx /= dist
        dy /= dist
        dz /= dist
        _, t = ray_cast(cam[0], cam[1], cam[2], dx, dy, dz, kinds, params, pos, quat, skip)
        if t >= dist - 1e-6:
            n_vis += 1
    return n_vis


def warmup():
    """Force-compile every kernel (no-op on the pure backend)."""
    kinds = np.array([0, 1, 2], dtype=np.int64)
    params = np.array([[0.1, 0.0, 0.0], [0.1, 0.2, 0.0], [0.1, 0.1, 0.1]])
    pos = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]])
    quat = np.tile(np.array([1.0, 0.0, 0.0, 0.0]), (3, 1))
    pairs = np.array([[0, 1], [0, 2], [1, 2]], dtype=np.int64)
    out = np.empty(3)
    pair_distances(kinds, params, pos, quat, pairs, out)
    first_violation(kinds, params, pos, quat, pairs, np.zeros(3))
    skip = np.empty(0, dtype=np.int64)
    ray_cast(0.0, 0.0, 0.0, 1.0, 0.0, 0.0, kinds, params, pos, quat, skip)
    count_unoccluded(np.zeros(3), np.array([[3.0, 0.0, 0.0]]), kinds, params, pos, quat, skip)
