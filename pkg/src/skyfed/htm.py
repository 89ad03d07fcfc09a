"""Hierarchical Triangular Mesh: a quadtree on the sphere.

Eight octahedral root triangles subdivide recursively by normalized edge
midpoints. A trixel id packs the path from the root: ids 8..15 at level 0,
then two bits per level (id = parent*4 + k), down to level 20.

Root naming convention used here (the mesh itself does not depend on it,
but ids and all tests do): S0..S3 are the southern faces, ids 8..11,
starting at the octant between ra 0 and 90 and proceeding counterclockwise
in ra; N0..N3 are the northern faces, ids 12..15, likewise. Vertices are
ordered counterclockwise seen from outside the sphere.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass

from .sphere import UnitVec3

MAX_LEVEL = 20

# default storage level for catalog indexing; trixels are ~3 arcmin across
DEFAULT_INDEX_LEVEL = 14


class HtmError(ValueError):
    """Invalid trixel id, level, or range set."""


def level_of(hid: int) -> int:
    """Level encoded in a trixel id (position of the leading set bit)."""
    if hid < 8:
        raise HtmError(f"invalid trixel id: {hid}")
    level, top = 0, hid
    while top >= 16:
        top >>= 2
        level += 1
    if top < 8:
        raise HtmError(f"invalid trixel id: {hid}")
    if level > MAX_LEVEL:
        raise HtmError(f"trixel id deeper than level {MAX_LEVEL}: {hid}")
    return level


@dataclass(frozen=True)
class TrixelId:
    id: int
    level: int

    def __post_init__(self):
        actual = level_of(self.id)
        if actual != self.level:
            raise HtmError(
                f"stored level {self.level} does not match id {self.id} "
                f"(level {actual})"
            )


@dataclass(frozen=True)
class Trixel:
    """A mesh cell: its id and corner vertices (counterclockwise outside)."""

    tid: TrixelId
    v0: UnitVec3
    v1: UnitVec3
    v2: UnitVec3


# --- internal plain-tuple math (hot paths avoid UnitVec3 construction) ---

def _cross(a, b):
    return (a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0])


def _dot(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def _mid(a, b):
    x, y, z = a[0] + b[0], a[1] + b[1], a[2] + b[2]
    n = math.sqrt(x * x + y * y + z * z)
    return (x / n, y / n, z / n)


def _sep(a, b):
    dx, dy, dz = a[0] - b[0], a[1] - b[1], a[2] - b[2]
    h = 0.5 * math.sqrt(dx * dx + dy * dy + dz * dz)
    return 2.0 * math.asin(min(1.0, h))


_XP = (1.0, 0.0, 0.0)
_XM = (-1.0, 0.0, 0.0)
_YP = (0.0, 1.0, 0.0)
_YM = (0.0, -1.0, 0.0)
_ZP = (0.0, 0.0, 1.0)
_ZM = (0.0, 0.0, -1.0)

# id -> (v0, v1, v2), counterclockwise from outside
_ROOT_VERTS = {
    8: (_ZM, _YP, _XP),   # S0
    9: (_ZM, _XM, _YP),   # S1
    10: (_ZM, _YM, _XM),  # S2
    11: (_ZM, _XP, _YM),  # S3
    12: (_ZP, _XP, _YP),  # N0
    13: (_ZP, _YP, _XM),  # N1
    14: (_ZP, _XM, _YM),  # N2
    15: (_ZP, _YM, _XP),  # N3
}


def _contains(verts, p, eps=0.0) -> bool:
    """Point-in-spherical-triangle via the three plane-side tests."""
    v0, v1, v2 = verts
    return (_dot(p, _cross(v0, v1)) >= -eps
            and _dot(p, _cross(v1, v2)) >= -eps
            and _dot(p, _cross(v2, v0)) >= -eps)


def _children_verts(verts):
    v0, v1, v2 = verts
    w0 = _mid(v1, v2)
    w1 = _mid(v0, v2)
    w2 = _mid(v0, v1)
    return ((v0, w2, w1), (v1, w0, w2), (v2, w1, w0), (w0, w1, w2))


def _make_trixel(hid, level, verts) -> Trixel:
    return Trixel(
        TrixelId(hid, level),
        UnitVec3(*verts[0]),
        UnitVec3(*verts[1]),
        UnitVec3(*verts[2]),
    )


def root_trixels() -> list[Trixel]:
    """The 8 octahedral root faces, ids 8..15."""
    return [_make_trixel(hid, 0, _ROOT_VERTS[hid]) for hid in range(8, 16)]


def children(t: Trixel) -> list[Trixel]:
    """Split a trixel at its normalized edge midpoints into 4 children.

    Child k = 0,1,2 keeps corner vk; child 3 is the center triangle.
    """
    if t.tid.level >= MAX_LEVEL:
        raise HtmError(f"cannot subdivide below level {MAX_LEVEL}")
    verts = (t.v0.as_tuple(), t.v1.as_tuple(), t.v2.as_tuple())
    kids = _children_verts(verts)
    level = t.tid.level + 1
    return [_make_trixel(t.tid.id * 4 + k, level, kids[k])
            for k in range(4)]


def trixel_of_point(v: UnitVec3, level: int) -> TrixelId:
    """Address of the level-`level` trixel containing direction v.

    Side tests use >= 0 with children tried in order k = 0,1,2,3; the
    first containing child wins, which makes edge points deterministic.
    If rounding leaves a point outside all four children, the child whose
    worst side test is least negative is taken.
    """
    if not (0 <= level <= MAX_LEVEL):
        raise HtmError(f"level out of range [0, {MAX_LEVEL}]: {level}")
    p = v.as_tuple()
    hid, verts = _locate_root(p)
    for _ in range(level):
        kids = _children_verts(verts)
        for k in range(4):
            if _contains(kids[k], p):
                hid = hid * 4 + k
                verts = kids[k]
                break
        else:
            best_k, best_score = 0, -math.inf
            for k in range(4):
                v0, v1, v2 = kids[k]
                score = min(_dot(p, _cross(v0, v1)),
                            _dot(p, _cross(v1, v2)),
                            _dot(p, _cross(v2, v0)))
                if score > best_score:
                    best_k, best_score = k, score
            hid = hid * 4 + best_k
            verts = kids[best_k]
    return TrixelId(hid, level)


def _locate_root(p):
    for hid in range(8, 16):
        if _contains(_ROOT_VERTS[hid], p):
            return hid, _ROOT_VERTS[hid]
    # cannot happen for a unit vector, but guard against rounding
    best, best_score = 8, -math.inf
    for hid in range(8, 16):
        v0, v1, v2 = _ROOT_VERTS[hid]
        score = min(_dot(p, _cross(v0, v1)),
                    _dot(p, _cross(v1, v2)),
                    _dot(p, _cross(v2, v0)))
        if score > best_score:
            best, best_score = hid, score
    return best, _ROOT_VERTS[best]


@dataclass(frozen=True)
class TrixelRangeSet:
    """Sorted, disjoint, non-adjacent inclusive id ranges at one level."""

    ranges: tuple[tuple[int, int], ...]
    level: int

    def __post_init__(self):
        prev_hi = None
        for lo, hi in self.ranges:
            if lo > hi:
                raise HtmError(f"inverted range ({lo}, {hi})")
            if level_of(lo) != self.level or level_of(hi) != self.level:
                raise HtmError("range endpoints not at the set's level")
            if prev_hi is not None and lo <= prev_hi + 1:
                raise HtmError("ranges overlap or touch; must be merged")
            prev_hi = hi


def _merge_ranges(raw: list[tuple[int, int]]) -> list[tuple[int, int]]:
    raw.sort()
    merged: list[list[int]] = []
    for lo, hi in raw:
        if merged and lo <= merged[-1][1] + 1:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    return [(lo, hi) for lo, hi in merged]


# --- cap-vs-trixel classification ---------------------------------------

_FULL, _PARTIAL, _DISJOINT = 0, 1, 2


def _closest_on_arc(c, a, b, n):
    """Min angular distance from c to the great-circle arc a->b (normal n)."""
    cn = _dot(c, n)
    px, py, pz = c[0] - cn * n[0], c[1] - cn * n[1], c[2] - cn * n[2]
    pn = math.sqrt(px * px + py * py + pz * pz)
    if pn > 0.0:
        p = (px / pn, py / pn, pz / pn)
        if _dot(_cross(a, p), n) >= 0.0 and _dot(_cross(p, b), n) >= 0.0:
            return _sep(c, p)
    return min(_sep(c, a), _sep(c, b))


def _farthest_on_arc(c, a, b, n):
    """Max angular distance from c to the arc a->b."""
    cn = _dot(c, n)
    px, py, pz = c[0] - cn * n[0], c[1] - cn * n[1], c[2] - cn * n[2]
    pn = math.sqrt(px * px + py * py + pz * pz)
    if pn > 0.0:
        f = (-px / pn, -py / pn, -pz / pn)
        if _dot(_cross(a, f), n) >= 0.0 and _dot(_cross(f, b), n) >= 0.0:
            return _sep(c, f)
    return max(_sep(c, a), _sep(c, b))


def _unit_normal(a, b):
    nx, ny, nz = _cross(a, b)
    nn = math.sqrt(nx * nx + ny * ny + nz * nz)
    return (nx / nn, ny / nn, nz / nn)


def _classify(verts, c, radius):
    """Conservative cap-vs-trixel test.

    Full only when every edge lies entirely within the cap and the cap's
    antipodal hole cannot poke through the triangle interior; disjoint when
    the closest point of the triangle is beyond the radius; anything
    uncertain is partial, which preserves coverage soundness.
    """
    v0, v1, v2 = verts
    edges = ((v0, v1), (v1, v2), (v2, v0))
    normals = [_unit_normal(a, b) for a, b in edges]

    if radius >= math.pi:
        return _FULL

    all_edges_in = all(
        _farthest_on_arc(c, a, b, n) <= radius
        for (a, b), n in zip(edges, normals)
    )
    if all_edges_in and not _contains(verts, (-c[0], -c[1], -c[2])):
        return _FULL

    if _contains(verts, c):
        return _PARTIAL
    closest = min(
        _closest_on_arc(c, a, b, n) for (a, b), n in zip(edges, normals)
    )
    if closest > radius:
        return _DISJOINT
    return _PARTIAL


def cover_circle(center: UnitVec3, radius: float, level: int) -> TrixelRangeSet:
    """Trixel ranges at `level` covering the spherical cap (radius in rad).

    A superset cover: full trixels found at shallower depth are expanded to
    level-`level` id ranges; partial trixels are descended until `level`.
    """
    if not (0.0 < radius <= math.pi):
        raise HtmError(f"radius out of range (0, pi]: {radius}")
    if not (0 <= level <= MAX_LEVEL):
        raise HtmError(f"level out of range [0, {MAX_LEVEL}]: {level}")
    c = center.as_tuple()
    raw: list[tuple[int, int]] = []

    def emit_full(hid, cur_level):
        shift = 2 * (level - cur_level)
        raw.append((hid << shift, ((hid + 1) << shift) - 1))

    def descend(hid, verts, cur_level):
        cls = _classify(verts, c, radius)
        if cls == _DISJOINT:
            return
        if cls == _FULL:
            emit_full(hid, cur_level)
            return
        if cur_level == level:
            raw.append((hid, hid))
            return
        kids = _children_verts(verts)
        for k in range(4):
            descend(hid * 4 + k, kids[k], cur_level + 1)

    for hid in range(8, 16):
        descend(hid, _ROOT_VERTS[hid], 0)
    return TrixelRangeSet(tuple(_merge_ranges(raw)), level)


def range_lookup(ranges: TrixelRangeSet, tid: TrixelId) -> bool:
    """Binary-search membership of a trixel id in a range set."""
    if tid.level != ranges.level:
        raise HtmError(
            f"level mismatch: id at {tid.level}, ranges at {ranges.level}"
        )
    rs = ranges.ranges
    i = bisect_right(rs, (tid.id, float("inf"))) - 1
    return i >= 0 and rs[i][0] <= tid.id <= rs[i][1]


def trixel_area(t: Trixel) -> float:
    """Spherical area of a trixel (L'Huilier), steradians."""
    a = _sep(t.v1.as_tuple(), t.v2.as_tuple())
    b = _sep(t.v0.as_tuple(), t.v2.as_tuple())
    c = _sep(t.v0.as_tuple(), t.v1.as_tuple())
    s = 0.5 * (a + b + c)
    t4 = math.tan(0.5 * s) * math.tan(0.5 * (s - a)) \
        * math.tan(0.5 * (s - b)) * math.tan(0.5 * (s - c))
    return 4.0 * math.atan(math.sqrt(max(0.0, t4)))


def trixel_from_id(tid: TrixelId) -> Trixel:
    """Reconstruct a trixel's vertices from its id."""
    path = []
    hid = tid.id
    for _ in range(tid.level):
        path.append(hid & 3)
        hid >>= 2
    verts = _ROOT_VERTS[hid]
    for k in reversed(path):
        verts = _children_verts(verts)[k]
    return _make_trixel(tid.id, tid.level, verts)
