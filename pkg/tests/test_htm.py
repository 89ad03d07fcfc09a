import math
import random

import numpy as np
import pytest

from skyfed import htm
from skyfed.htm import (
    DEFAULT_INDEX_LEVEL, HtmError, Trixel, TrixelId, TrixelRangeSet,
    children, cover_circle, level_of, range_lookup, root_trixels,
    trixel_area, trixel_from_id, trixel_of_point,
)
from skyfed.sphere import ARCMIN_TO_RAD, ARCSEC_TO_RAD, SkyPos, UnitVec3, \
    radec_to_unitvec

rng = random.Random(987)


def random_unitvec(r=rng) -> UnitVec3:
    while True:
        x, y, z = (r.gauss(0, 1) for _ in range(3))
        n = math.sqrt(x * x + y * y + z * z)
        if n > 1e-3:
            return UnitVec3(x / n, y / n, z / n)


def random_in_cap(center: UnitVec3, radius: float, r=rng) -> UnitVec3:
    """Uniform point in a spherical cap, by direct construction."""
    axis = np.array(center.as_tuple())
    helper = np.array([1.0, 0, 0]) if abs(axis[0]) < 0.9 \
        else np.array([0, 1.0, 0])
    u = np.cross(axis, helper)
    u /= np.linalg.norm(u)
    v = np.cross(axis, u)
    z = 1 - r.random() * (1 - math.cos(min(radius, math.pi)))
    phi = r.random() * 2 * math.pi
    s = math.sqrt(max(0.0, 1 - z * z))
    p = z * axis + s * (math.cos(phi) * u + math.sin(phi) * v)
    return UnitVec3(*(p / np.linalg.norm(p)))


def contains(t: Trixel, p: UnitVec3) -> bool:
    verts = (t.v0.as_tuple(), t.v1.as_tuple(), t.v2.as_tuple())
    return htm._contains(verts, p.as_tuple())


class TestIds:
    def test_roots_are_8_to_15(self):
        assert sorted(t.tid.id for t in root_trixels()) == list(range(8, 16))
        for t in root_trixels():
            assert t.tid.level == 0

    def test_level_of(self):
        assert level_of(8) == 0
        assert level_of(32) == 1
        assert level_of(8 * 4 ** 20) == 20

    def test_child_ids(self):
        parent = root_trixels()[0]
        kids = children(parent)
        assert [k.tid.id for k in kids] == [32, 33, 34, 35]
        for k in kids:
            assert k.tid.level == 1

    def test_id_range_invariant_level20(self):
        for _ in range(50):
            t = trixel_of_point(random_unitvec(), 20)
            assert 8 * 4 ** 20 <= t.id < 16 * 4 ** 20

    def test_invalid_ids_rejected(self):
        for bad in (0, 1, 7):
            with pytest.raises(HtmError):
                level_of(bad)
        with pytest.raises(HtmError):
            TrixelId(32, 0)  # level does not match the id

    def test_level_overflow(self):
        with pytest.raises(HtmError):
            trixel_of_point(UnitVec3(1, 0, 0), htm.MAX_LEVEL + 1)
        with pytest.raises(HtmError):
            level_of(8 * 4 ** 21)


class TestContainment:
    def test_roots_partition_sphere(self):
        r = random.Random(5)
        roots = root_trixels()
        for _ in range(2000):
            p = random_unitvec(r)
            holders = [t for t in roots if contains(t, p)]
            assert len(holders) == 1

    def test_children_cover_parent(self):
        r = random.Random(6)
        parent = trixel_from_id(
            trixel_of_point(radec_to_unitvec(SkyPos(181.3, -0.76)), 3))
        kids = children(parent)
        hits = 0
        while hits < 300:
            p = random_unitvec(r)
            if not contains(parent, p):
                continue
            hits += 1
            inside = [k for k in kids if contains(k, p)]
            assert len(inside) >= 1
            # edge points may pass two side tests; the resolver must
            # still land in a child of this parent
            sub = trixel_of_point(p, parent.tid.level + 1)
            assert sub.id >> 2 == parent.tid.id

    def test_point_lookup_matches_bruteforce_root(self):
        r = random.Random(7)
        for _ in range(300):
            p = random_unitvec(r)
            t0 = trixel_of_point(p, 0)
            holders = [t for t in root_trixels() if contains(t, p)]
            assert t0.id == holders[0].tid.id

    def test_prefix_consistency(self):
        r = random.Random(8)
        for _ in range(100):
            p = random_unitvec(r)
            deep = trixel_of_point(p, 9)
            for lvl in range(9):
                shallow = trixel_of_point(p, lvl)
                assert deep.id >> (2 * (9 - lvl)) == shallow.id

    def test_centroid_self_consistency_level5(self):
        r = random.Random(9)
        for _ in range(50):
            t = trixel_from_id(trixel_of_point(random_unitvec(r), 5))
            sums = [t.v0.x + t.v1.x + t.v2.x,
                    t.v0.y + t.v1.y + t.v2.y,
                    t.v0.z + t.v1.z + t.v2.z]
            c = UnitVec3.normalized(*sums)
            assert trixel_of_point(c, 5).id == t.tid.id


class TestRangeSet:
    def test_invariants(self):
        rs = TrixelRangeSet(((8, 9), (12, 15)), 0)
        assert rs.ranges == ((8, 9), (12, 15))
        with pytest.raises(HtmError):
            TrixelRangeSet(((9, 8),), 0)            # inverted
        with pytest.raises(HtmError):
            TrixelRangeSet(((8, 10), (9, 12)), 0)   # overlapping
        with pytest.raises(HtmError):
            TrixelRangeSet(((8, 9), (10, 12)), 0)   # touching, unmerged
        with pytest.raises(HtmError):
            TrixelRangeSet(((32, 33),), 0)          # endpoint level wrong

    def test_membership_vs_linear_scan(self):
        r = random.Random(11)
        ranges = TrixelRangeSet(((34, 38), (44, 44), (50, 60)), 1)
        flat = set()
        for lo, hi in ranges.ranges:
            flat.update(range(lo, hi + 1))
        for _ in range(1000):
            i = r.randrange(32, 64)
            assert range_lookup(ranges, TrixelId(i, 1)) == (i in flat)

    def test_level_mismatch(self):
        ranges = TrixelRangeSet(((34, 38),), 1)
        with pytest.raises(HtmError):
            range_lookup(ranges, TrixelId(8, 0))


class TestCover:
    def test_whole_sky(self):
        cover = cover_circle(UnitVec3(0, 0, 1), math.pi, 3)
        assert cover.ranges == ((8 * 4 ** 3, 16 * 4 ** 3 - 1),)

    def test_soundness_random_caps(self):
        r = random.Random(12)
        for _ in range(30):
            center = random_unitvec(r)
            radius = math.exp(r.uniform(math.log(ARCSEC_TO_RAD),
                                        math.log(math.pi / 2)))
            level = r.randint(1, 7)
            cover = cover_circle(center, radius, level)
            for _ in range(200):
                p = random_in_cap(center, radius, r)
                t = trixel_of_point(p, level)
                assert range_lookup(cover, t), "in-cap point outside cover"

    def test_tightness_flagship_cap(self):
        # 6.5 arcmin cap at the default index level: covered area must
        # stay below 4x the cap area
        center = radec_to_unitvec(SkyPos(181.3, -0.76))
        radius = 6.5 * ARCMIN_TO_RAD
        cover = cover_circle(center, radius, DEFAULT_INDEX_LEVEL)
        covered = sum(
            trixel_area(trixel_from_id(TrixelId(i, DEFAULT_INDEX_LEVEL)))
            for lo, hi in cover.ranges for i in range(lo, hi + 1))
        cap_area = 2 * math.pi * (1 - math.cos(radius))
        assert cap_area < covered < 4 * cap_area

    def test_small_cap_is_tight(self):
        center = radec_to_unitvec(SkyPos(45.0, 45.0))
        cover = cover_circle(center, 10 * ARCSEC_TO_RAD, 2)
        n = sum(hi - lo + 1 for lo, hi in cover.ranges)
        assert n <= 4

    def test_invalid_inputs(self):
        c = UnitVec3(1, 0, 0)
        with pytest.raises(HtmError):
            cover_circle(c, 0.0, 3)
        with pytest.raises(HtmError):
            cover_circle(c, 4.0, 3)
        with pytest.raises(HtmError):
            cover_circle(c, 0.1, htm.MAX_LEVEL + 1)


class TestArea:
    def test_root_area(self):
        for t in root_trixels():
            assert trixel_area(t) == pytest.approx(4 * math.pi / 8,
                                                   rel=1e-12)

    def test_children_areas_sum_to_parent(self):
        t = trixel_from_id(trixel_of_point(radec_to_unitvec(SkyPos(10, 20)), 2))
        total = sum(trixel_area(k) for k in children(t))
        assert total == pytest.approx(trixel_area(t), rel=1e-9)
