import math
import random

import numpy as np
import pytest

from skyfed.sphere import ARCSEC_TO_RAD, SkyPos, UnitVec3, radec_to_unitvec
from skyfed.xmatch import (
    ArchiveSigma, CandidateSlice, MatchTuple, XMatchError, best_position,
    crossmatch_step, match_statistic, search_radius, tuple_extend,
    tuple_seed, weight_of,
)

from oracles import chi2_cumulative_decimal, chi2_direct, match_stat

rng = random.Random(31)


def offset_pos(base: SkyPos, east_arcsec: float,
               north_arcsec: float) -> UnitVec3:
    cosd = math.cos(math.radians(base.dec))
    return radec_to_unitvec(SkyPos(
        base.ra + east_arcsec / 3600.0 / cosd,
        base.dec + north_arcsec / 3600.0))


def random_tuple_inputs(r, n_members=None):
    base = SkyPos(r.uniform(0, 360), r.uniform(-85, 85))
    n = n_members or r.randint(2, 5)
    ws, xs = [], []
    for _ in range(n):
        sigma = r.uniform(0.05, 2.0)
        ws.append(weight_of(ArchiveSigma("A", sigma)))
        xs.append(offset_pos(base, r.uniform(-3, 3),
                             r.uniform(-3, 3)).as_tuple())
    return ws, xs


class TestWeights:
    def test_one_arcsec_weight(self):
        w = weight_of(ArchiveSigma("X", 1.0))
        assert w == pytest.approx(1.0 / ARCSEC_TO_RAD ** 2, rel=1e-12)
        assert w == pytest.approx(4.2545e10, rel=1e-4)

    def test_sigma_floor(self):
        with pytest.raises(XMatchError):
            ArchiveSigma("X", 0.0)
        with pytest.raises(XMatchError):
            ArchiveSigma("X", -1.0)
        with pytest.raises(XMatchError):
            ArchiveSigma("X", 0.0099)


class TestChiSquareIdentity:
    def test_cumulative_vs_direct_minimization(self):
        # the cumulative shortcut 2(a - |a_vec|) must equal the per-member
        # sum of weighted squared deviations at the optimum
        r = random.Random(101)
        for _ in range(1000):
            ws, xs = random_tuple_inputs(r)
            lhs = chi2_cumulative_decimal(ws, xs)
            rhs = chi2_direct(ws, xs)
            scale = max(abs(lhs), abs(rhs), 1e-30)
            assert abs(lhs - rhs) / scale <= 1e-10

    def test_library_agrees_with_oracle(self):
        # float64 cancellation in 2(a - |a_vec|) bounds the achievable
        # chi2 accuracy at ~ n * w_max * eps; assert within that budget
        r = random.Random(102)
        for _ in range(200):
            ws, xs = random_tuple_inputs(r)
            avec = tuple(sum(w * x[k] for w, x in zip(ws, xs))
                         for k in range(3))
            t = MatchTuple((("A", 1),), avec, sum(ws))
            expect = match_stat(ws, xs)
            tol_chi2 = 50 * len(ws) * max(ws) * 2.3e-16
            assert abs(match_statistic(t) ** 2 - expect ** 2) <= tol_chi2

    def test_two_member_closed_form(self):
        # equal sigma = 1", separation 2" -> m = 2/(1*sqrt(2)) = sqrt(2)
        base = SkyPos(181.3, -0.76)
        s = ArchiveSigma("A", 1.0)
        t = tuple_seed(offset_pos(base, 0, 0), 1, s)
        t2 = tuple_extend(t, offset_pos(base, 2.0, 0), 2,
                          ArchiveSigma("B", 1.0))
        assert match_statistic(t2) == pytest.approx(math.sqrt(2), abs=1e-6)

    def test_two_member_closed_form_random(self):
        r = random.Random(103)
        base = SkyPos(50.0, 20.0)
        for _ in range(100):
            s1 = r.uniform(0.05, 2)
            s2 = r.uniform(0.05, 2)
            sep = r.uniform(0.01, 5)
            t = tuple_seed(offset_pos(base, 0, 0), 1, ArchiveSigma("A", s1))
            t2 = tuple_extend(t, offset_pos(base, sep, 0), 2,
                              ArchiveSigma("B", s2))
            expect = sep / math.sqrt(s1 ** 2 + s2 ** 2)
            w_max = max(weight_of(ArchiveSigma("A", s1)),
                        weight_of(ArchiveSigma("B", s2)))
            tol_chi2 = 100 * w_max * 2.3e-16
            got = match_statistic(t2)
            assert abs(got ** 2 - expect ** 2) <= max(tol_chi2,
                                                      1e-5 * expect ** 2)

    def test_three_members_vs_direct(self):
        # three members at mutual 1" separations, equal sigma
        base = SkyPos(10.0, 0.0)
        xs = [offset_pos(base, 0, 0),
              offset_pos(base, 1.0, 0),
              offset_pos(base, 0.5, math.sqrt(3) / 2)]
        s = ArchiveSigma("A", 1.0)
        t = tuple_seed(xs[0], 1, s)
        t = tuple_extend(t, xs[1], 2, ArchiveSigma("B", 1.0))
        t = tuple_extend(t, xs[2], 3, ArchiveSigma("C", 1.0))
        w = weight_of(s)
        expect = match_stat([w] * 3, [x.as_tuple() for x in xs])
        assert match_statistic(t) == pytest.approx(expect, abs=1e-4)


class TestBestPosition:
    def test_midpoint_equal_weights(self):
        base = SkyPos(200.0, -30.0)
        a = offset_pos(base, -1.0, 0)
        b = offset_pos(base, 1.0, 0)
        s = ArchiveSigma("A", 1.0)
        t = tuple_extend(tuple_seed(a, 1, s), b, 2, ArchiveSigma("B", 1.0))
        mid = UnitVec3.normalized(a.x + b.x, a.y + b.y, a.z + b.z)
        best = best_position(t)
        d = math.sqrt((best.x - mid.x) ** 2 + (best.y - mid.y) ** 2
                      + (best.z - mid.z) ** 2)
        assert d < 1e-12

    def test_quarter_point_4_to_1_weights(self):
        # weight ratio 4:1 puts the optimum 1/5 of the way from the
        # heavy member (sigma 1) toward the light one (sigma 2)
        base = SkyPos(0.0, 0.0)
        heavy = offset_pos(base, 0, 0)
        light = offset_pos(base, 4.0, 0)
        t = tuple_extend(tuple_seed(heavy, 1, ArchiveSigma("A", 1.0)),
                         light, 2, ArchiveSigma("B", 2.0))
        best = best_position(t)
        expect = offset_pos(base, 0.8, 0)  # (4*0 + 1*4)/5 arcsec east
        d = math.sqrt((best.x - expect.x) ** 2 + (best.y - expect.y) ** 2
                      + (best.z - expect.z) ** 2)
        assert d < 1e-9

    def test_degenerate_direction(self):
        t = MatchTuple((("A", 1),), (0.0, 0.0, 0.0), 1.0)
        with pytest.raises(XMatchError):
            best_position(t)


class TestExtend:
    def test_duplicate_archive_rejected(self):
        s = ArchiveSigma("A", 1.0)
        t = tuple_seed(UnitVec3(1, 0, 0), 1, s)
        with pytest.raises(XMatchError):
            tuple_extend(t, UnitVec3(0, 1, 0), 2, s)

    def test_carried_collision_rejected(self):
        t = tuple_seed(UnitVec3(1, 0, 0), 1, ArchiveSigma("A", 1.0),
                       {"o.x": 1})
        with pytest.raises(XMatchError):
            tuple_extend(t, UnitVec3(1, 0, 0), 2, ArchiveSigma("B", 1.0),
                         {"o.x": 2})

    def test_huge_sigma_extension_changes_little(self):
        base = SkyPos(120.0, 5.0)
        t = tuple_extend(
            tuple_seed(offset_pos(base, 0, 0), 1, ArchiveSigma("A", 1.0)),
            offset_pos(base, 2.0, 0), 2, ArchiveSigma("B", 1.0))
        m0 = match_statistic(t)
        t2 = tuple_extend(t, offset_pos(base, 1.0, 0), 3,
                          ArchiveSigma("C", 1e6))
        assert abs(match_statistic(t2) - m0) < 1e-6

    def test_extension_at_best_position_vs_oracle(self):
        # adding a member exactly at the current optimum: the new m comes
        # from the direct-minimization oracle, not the old value
        base = SkyPos(33.0, 12.0)
        s = 1.0
        xs = [offset_pos(base, -1.0, 0), offset_pos(base, 1.0, 0)]
        t = tuple_extend(
            tuple_seed(xs[0], 1, ArchiveSigma("A", s)),
            xs[1], 2, ArchiveSigma("B", s))
        assert match_statistic(t) == pytest.approx(math.sqrt(2), abs=1e-6)
        at_best = best_position(t)
        t3 = tuple_extend(t, at_best, 3, ArchiveSigma("C", s))
        w = weight_of(ArchiveSigma("A", s))
        expect = match_stat([w, w, w],
                            [x.as_tuple() for x in xs]
                            + [at_best.as_tuple()])
        lib = match_statistic(t3)
        assert abs(lib ** 2 - expect ** 2) <= 1e-6
        # zero deviation added at the minimizer: chi2 is unchanged
        assert lib == pytest.approx(match_statistic(t), abs=1e-6)


class TestCrossmatchStep:
    def make_slice(self, positions, keys=None):
        xyz = np.array([p.as_tuple() for p in positions]).reshape(-1, 3)
        keys = keys or list(range(len(positions)))
        return CandidateSlice(keys, xyz, [{} for _ in keys])

    def test_mandatory_forks_and_drops(self):
        base = SkyPos(100.0, 0.0)
        sA = ArchiveSigma("A", 1.0)
        sB = ArchiveSigma("B", 1.0)
        seeds = [tuple_seed(offset_pos(base, 0, 0), 10, sA),
                 tuple_seed(offset_pos(base, 60, 0), 11, sA)]
        local = self.make_slice([offset_pos(base, 0.5, 0),
                                 offset_pos(base, -0.5, 0),
                                 offset_pos(base, 30, 0)])
        out = crossmatch_step(seeds, local, sB, 3.0, is_dropout=False)
        # seed 10 matches two nearby objects; seed 11 matches nothing
        assert sorted(t.members for t in out) == [
            (("A", 10), ("B", 0)), (("A", 10), ("B", 1))]

    def test_dropout_vetoes(self):
        base = SkyPos(100.0, 0.0)
        sA = ArchiveSigma("A", 1.0)
        sB = ArchiveSigma("B", 1.0)
        seeds = [tuple_seed(offset_pos(base, 0, 0), 10, sA),
                 tuple_seed(offset_pos(base, 60, 0), 11, sA)]
        local = self.make_slice([offset_pos(base, 0.5, 0)])
        out = crossmatch_step(seeds, local, sB, 3.0, is_dropout=True)
        # only the far seed survives, unchanged
        assert [t.members for t in out] == [(("A", 11),)]
        assert out[0] == seeds[1]

    def test_empty_output_is_valid(self):
        sA = ArchiveSigma("A", 1.0)
        seeds = [tuple_seed(UnitVec3(1, 0, 0), 1, sA)]
        empty = CandidateSlice([], np.empty((0, 3)), [])
        assert crossmatch_step(seeds, empty, ArchiveSigma("B", 1.0), 3.0,
                               False) == []

    def test_search_radius_is_sufficient(self):
        # any object passing the threshold must lie inside search_radius
        r = random.Random(77)
        base = SkyPos(10.0, 10.0)
        for _ in range(300):
            s1 = ArchiveSigma("A", r.uniform(0.05, 2))
            s2 = ArchiveSigma("B", r.uniform(0.05, 2))
            theta = r.uniform(1, 5)
            t = tuple_seed(offset_pos(base, 0, 0), 1, s1)
            sep = r.uniform(0, 8)
            other = offset_pos(base, sep, 0)
            ext = tuple_extend(t, other, 2, s2)
            if match_statistic(ext) < theta:
                assert sep * ARCSEC_TO_RAD <= search_radius(t, s2, theta)

    def test_theta_must_be_positive(self):
        with pytest.raises(XMatchError):
            crossmatch_step([], CandidateSlice([], np.empty((0, 3)), []),
                            ArchiveSigma("A", 1.0), 0.0, False)
