"""Probabilistic cross-identification on the unit sphere.

Positions are matched by minimizing the inverse-variance weighted sum of
squared positional deviations. For a tuple of member objects with unit
vectors x_i and weights w_i = 1/sigma_i^2 (sigma in radians), only two
cumulative quantities are needed: a_vec = sum(w_i x_i) and
a = sum(w_i). The minimum of sum(w_i |x_i - x|^2) over unit x is reached
at x = a_vec/|a_vec| and equals 2*(a - |a_vec|); the match statistic is
its square root, read as "standard deviations from a common position".
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .sphere import ARCSEC_TO_RAD, UnitVec3

# sigma floor keeps |a_vec| cancellation in float64 well below the
# statistic values of interest
MIN_SIGMA_ARCSEC = 0.01


class XMatchError(ValueError):
    pass


@dataclass(frozen=True)
class ArchiveSigma:
    """RMS circular positional accuracy of one archive, arcseconds."""

    archive_name: str
    sigma_arcsec: float

    def __post_init__(self):
        if self.sigma_arcsec < MIN_SIGMA_ARCSEC:
            raise XMatchError(
                f"sigma must be >= {MIN_SIGMA_ARCSEC} arcsec, "
                f"got {self.sigma_arcsec}")


def weight_of(sigma: ArchiveSigma) -> float:
    """Inverse-variance weight in rad^-2."""
    s_rad = sigma.sigma_arcsec * ARCSEC_TO_RAD
    return 1.0 / (s_rad * s_rad)


@dataclass(frozen=True)
class MatchTuple:
    """A partial cross-identification across archives.

    members: per-archive (archive_name, object_key) in processing order.
    a_vec / a_weight: the cumulative weighted direction and weight.
    carried: alias-qualified column name -> value, accumulated for cross
    predicates and the final select list.
    """

    members: tuple[tuple[str, object], ...]
    a_vec: tuple[float, float, float]
    a_weight: float
    carried: dict = field(default_factory=dict)

    def member_archives(self) -> frozenset[str]:
        return frozenset(a for a, _ in self.members)


def tuple_seed(obj_pos: UnitVec3, key, sigma: ArchiveSigma,
               carried: dict | None = None) -> MatchTuple:
    w = weight_of(sigma)
    return MatchTuple(
        members=((sigma.archive_name, key),),
        a_vec=(w * obj_pos.x, w * obj_pos.y, w * obj_pos.z),
        a_weight=w,
        carried=dict(carried or {}),
    )


def best_position(t: MatchTuple) -> UnitVec3:
    ax, ay, az = t.a_vec
    n = math.sqrt(ax * ax + ay * ay + az * az)
    if n < 1e-300:
        raise XMatchError("degenerate cumulative direction "
                          "(antipodal cancellation)")
    return UnitVec3(ax / n, ay / n, az / n)


def match_statistic(t: MatchTuple) -> float:
    """sqrt of the minimized chi-square, from cumulative quantities only."""
    ax, ay, az = t.a_vec
    chi2 = 2.0 * (t.a_weight - math.sqrt(ax * ax + ay * ay + az * az))
    return math.sqrt(max(0.0, chi2))


def tuple_extend(t: MatchTuple, obj_pos: UnitVec3, key,
                 sigma: ArchiveSigma,
                 carried_new: dict | None = None) -> MatchTuple:
    if sigma.archive_name in t.member_archives():
        raise XMatchError(
            f"archive already in tuple: {sigma.archive_name}")
    w = weight_of(sigma)
    carried = dict(t.carried)
    for k, v in (carried_new or {}).items():
        if k in carried:
            raise XMatchError(f"carried column collision: {k}")
        carried[k] = v
    ax, ay, az = t.a_vec
    return MatchTuple(
        members=t.members + ((sigma.archive_name, key),),
        a_vec=(ax + w * obj_pos.x, ay + w * obj_pos.y, az + w * obj_pos.z),
        a_weight=t.a_weight + w,
        carried=carried,
    )


class CandidateSlice:
    """A read-only slice of one node's catalog, cone-searchable.

    Holds per-row unit vectors as numpy arrays plus the key and carried
    attribute values for each row.
    """

    def __init__(self, keys: list, unit_xyz: np.ndarray,
                 carried_rows: list[dict]):
        if unit_xyz.shape != (len(keys), 3):
            raise XMatchError("unit_xyz must be (n, 3)")
        self.keys = keys
        self.xyz = np.asarray(unit_xyz, dtype=np.float64)
        self.carried_rows = carried_rows

    def __len__(self):
        return len(self.keys)

    def cone(self, center: UnitVec3, radius: float) -> np.ndarray:
        """Indices of rows within `radius` radians of `center`."""
        if len(self.keys) == 0:
            return np.empty(0, dtype=np.intp)
        c = np.array([center.x, center.y, center.z])
        d = self.xyz - c
        chord2 = np.einsum("ij,ij->i", d, d)
        max_chord = 2.0 * math.sin(min(radius, math.pi) / 2.0)
        return np.nonzero(chord2 <= max_chord * max_chord)[0]

    def position(self, i: int) -> UnitVec3:
        x, y, z = self.xyz[i]
        return UnitVec3(float(x), float(y), float(z))


def search_radius(t: MatchTuple, sigma: ArchiveSigma, theta: float) -> float:
    """Conservative candidate radius in radians.

    theta times (the local archive's positional SD plus the incoming
    tuple's combined SD 1/sqrt(a)); any object passing the chi-square
    threshold lies within it.
    """
    s_local = sigma.sigma_arcsec * ARCSEC_TO_RAD
    return theta * (s_local + 1.0 / math.sqrt(t.a_weight))


def crossmatch_step(incoming: list[MatchTuple], local_objects: CandidateSlice,
                    sigma: ArchiveSigma, theta: float,
                    is_dropout: bool) -> list[MatchTuple]:
    """One daisy-chain hop: fork/extend tuples at a mandatory archive, or
    veto them at a dropout archive.

    Mandatory: each incoming tuple yields one extended tuple per local
    object whose extension keeps the match statistic below theta; tuples
    with no match are dropped. Dropout: the incoming tuple survives
    unchanged iff no local object matches; it is never extended.
    """
    if theta <= 0:
        raise XMatchError("theta must be positive")
    out: list[MatchTuple] = []
    for t in incoming:
        center = best_position(t)
        radius = search_radius(t, sigma, theta)
        matched_any = False
        for i in local_objects.cone(center, radius):
            extended = tuple_extend(
                t, local_objects.position(int(i)),
                local_objects.keys[int(i)], sigma,
                None if is_dropout else local_objects.carried_rows[int(i)],
            )
            if match_statistic(extended) < theta:
                matched_any = True
                if is_dropout:
                    break
                out.append(extended)
        if is_dropout and not matched_any:
            out.append(t)
    return out
