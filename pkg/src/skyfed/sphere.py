"""Geometry on the unit sphere: sky positions, Cartesian unit vectors,
angular separation.

Degrees at every external interface, radians internally. Directions are
carried as Cartesian unit vectors wherever possible, which keeps the math
free of coordinate singularities at the poles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

DEG_TO_RAD = math.pi / 180.0
RAD_TO_DEG = 180.0 / math.pi
ARCMIN_TO_RAD = math.pi / 10800.0
ARCSEC_TO_RAD = math.pi / 648000.0

# tolerance on x^2+y^2+z^2-1 guaranteed after construction
_UNIT_TOL = 1e-12
# looser tolerance accepted on raw input before renormalizing
_INPUT_TOL = 1e-9
# |z| at or above this counts as a pole; ra is then defined to be 0
_POLE_Z = 1.0 - 1e-15


class GeometryError(ValueError):
    """Invalid geometric input (dec out of range, non-unit vector, ...)."""


@dataclass(frozen=True)
class SkyPos:
    """A sky direction as (ra, dec) in degrees; ra normalized to [0, 360)."""

    ra: float
    dec: float

    def __post_init__(self):
        if not (-90.0 <= self.dec <= 90.0):
            raise GeometryError(f"dec out of range [-90, 90]: {self.dec}")
        ra = self.ra % 360.0
        if ra == 360.0:  # tiny negatives round up to exactly 360
            ra = 0.0
        if ra != self.ra:
            object.__setattr__(self, "ra", ra)


@dataclass(frozen=True)
class UnitVec3:
    """A direction as a Cartesian unit vector.

    Construction renormalizes inputs that are within 1e-9 of unit length
    and rejects anything farther off.
    """

    x: float
    y: float
    z: float

    def __post_init__(self):
        n2 = self.x * self.x + self.y * self.y + self.z * self.z
        if abs(n2 - 1.0) > _INPUT_TOL:
            raise GeometryError(f"not a unit vector: |v|^2 = {n2!r}")
        if abs(n2 - 1.0) > _UNIT_TOL:
            n = math.sqrt(n2)
            object.__setattr__(self, "x", self.x / n)
            object.__setattr__(self, "y", self.y / n)
            object.__setattr__(self, "z", self.z / n)

    @classmethod
    def normalized(cls, x: float, y: float, z: float) -> "UnitVec3":
        n = math.sqrt(x * x + y * y + z * z)
        if n == 0.0:
            raise GeometryError("cannot normalize the zero vector")
        return cls(x / n, y / n, z / n)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.z)

    def dot(self, other: "UnitVec3") -> float:
        return self.x * other.x + self.y * other.y + self.z * other.z


def radec_to_unitvec(p: SkyPos) -> UnitVec3:
    """Convert (ra, dec) degrees to a Cartesian unit vector."""
    ra = p.ra * DEG_TO_RAD
    dec = p.dec * DEG_TO_RAD
    cd = math.cos(dec)
    return UnitVec3(cd * math.cos(ra), cd * math.sin(ra), math.sin(dec))


def unitvec_to_radec(v: UnitVec3) -> SkyPos:
    """Convert a unit vector back to (ra, dec) degrees; ra = 0 at the poles."""
    if abs(v.z) >= _POLE_Z:
        return SkyPos(0.0, 90.0 if v.z > 0 else -90.0)
    ra = math.atan2(v.y, v.x) * RAD_TO_DEG
    if ra < 0.0:
        ra += 360.0
    dec = math.asin(max(-1.0, min(1.0, v.z))) * RAD_TO_DEG
    return SkyPos(ra, dec)


def angular_separation(a: UnitVec3, b: UnitVec3) -> float:
    """Angle between two unit vectors in radians.

    Chord-based (2*asin(|a-b|/2)): keeps full precision at small
    separations, which is exactly the cross-match regime, and is also
    stable near pi.
    """
    dx = a.x - b.x
    dy = a.y - b.y
    dz = a.z - b.z
    half_chord = 0.5 * math.sqrt(dx * dx + dy * dy + dz * dz)
    return 2.0 * math.asin(min(1.0, half_chord))


def separation_xyz(ax, ay, az, bx, by, bz) -> float:
    """angular_separation on raw components; hot-path variant."""
    dx = ax - bx
    dy = ay - by
    dz = az - bz
    half_chord = 0.5 * math.sqrt(dx * dx + dy * dy + dz * dz)
    return 2.0 * math.asin(min(1.0, half_chord))
