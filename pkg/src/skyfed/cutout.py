"""Image mosaic cutouts: north-up, scalable views assembled from stored
tiles that share one gnomonic tangent point.

Tiles are placed into a working buffer at their native scale with
nearest-pixel integer offsets (no resampling at this step). The requested
view is then produced by one inverse affine map (rotation to put celestial
north up, about the request center, combined with the scale change) with
bilinear sampling, and cropped to the requested size.
"""

from __future__ import annotations

import json
import math
import os
import re
from dataclasses import dataclass

import numpy as np

from .httpbase import JsonHttpService, ServiceError
from .sphere import RAD_TO_DEG, SkyPos

MAX_DIM = 4096
SCALE_DYNAMIC_RANGE = 10000.0
MAX_VALUE = 65535


class CutoutError(ValueError):
    pass


# --- portable graymap I/O (binary P5, 16-bit) ----------------------------

def write_pgm(path: str, img: np.ndarray):
    data = encode_pgm(img)
    with open(path, "wb") as fh:
        fh.write(data)


def encode_pgm(img: np.ndarray) -> bytes:
    if img.ndim != 2:
        raise CutoutError("image must be 2-D")
    arr = np.asarray(img, dtype=">u2")
    h, w = arr.shape
    return b"P5\n%d %d\n%d\n" % (w, h, MAX_VALUE) + arr.tobytes()


def read_pgm(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    return decode_pgm(data)


def decode_pgm(data: bytes) -> np.ndarray:
    m = re.match(rb"P5\s+(?:#[^\n]*\n\s*)*(\d+)\s+(\d+)\s+(\d+)\s", data)
    if not m:
        raise CutoutError("not a binary P5 graymap")
    w, h, maxval = (int(g) for g in m.groups())
    pixels = data[m.end():]
    if maxval > 255:
        arr = np.frombuffer(pixels, dtype=">u2", count=w * h)
    else:
        arr = np.frombuffer(pixels, dtype=np.uint8, count=w * h)
    return arr.reshape(h, w).astype(np.uint16)


# --- tiles ----------------------------------------------------------------

@dataclass(frozen=True)
class Tile:
    pixels: np.ndarray    # uint16, row 0 = top of the tile
    origin_dx: float      # lower-left corner, native pixels from tangent
    origin_dy: float

    def __post_init__(self):
        if self.pixels.ndim != 2 or min(self.pixels.shape) < 1:
            raise CutoutError("tile must be a 2-D image")


class TileSet:
    """All tiles of one sky region plus the shared projection constants."""

    def __init__(self, tangent: SkyPos, pixel_scale: float,
                 tiles: list[Tile], max_scale: float | None = None,
                 background: int = 0, objects: list[dict] | None = None):
        if pixel_scale <= 0:
            raise CutoutError("pixel_scale must be positive")
        self.tangent = tangent
        self.pixel_scale = pixel_scale  # native pixels per degree
        self.max_scale = max_scale if max_scale is not None else pixel_scale
        self.min_scale = self.max_scale / SCALE_DYNAMIC_RANGE
        self.background = background
        self.tiles = tiles
        self.objects = objects or []
        self._buffer = None
        self._buffer_origin = None

    @classmethod
    def load(cls, manifest_path: str) -> "TileSet":
        root = os.path.dirname(os.path.abspath(manifest_path))
        with open(manifest_path, "r", encoding="utf-8") as fh:
            mf = json.load(fh)
        tiles = [
            Tile(read_pgm(os.path.join(root, t["file"])),
                 float(t["dx"]), float(t["dy"]))
            for t in mf["tiles"]
        ]
        objects = []
        obj_file = mf.get("objects_file")
        if obj_file:
            import csv
            with open(os.path.join(root, obj_file), encoding="utf-8",
                      newline="") as fh:
                for row in csv.DictReader(fh):
                    objects.append({
                        "objId": int(row["objId"]),
                        "ra": float(row["ra"]),
                        "dec": float(row["dec"]),
                        "has_spectrum": bool(int(row.get("has_spectrum",
                                                         0))),
                    })
        return cls(SkyPos(mf["tangent_ra"], mf["tangent_dec"]),
                   float(mf["pixel_scale"]), tiles,
                   max_scale=float(mf.get("max_scale", mf["pixel_scale"])),
                   background=int(mf.get("background", 0)),
                   objects=objects)

    @property
    def px_per_rad(self) -> float:
        return self.pixel_scale * RAD_TO_DEG

    def project(self, pos: SkyPos) -> tuple[float, float]:
        """Sky -> native plane pixels (x east-ish, y toward north)."""
        a0 = math.radians(self.tangent.ra)
        d0 = math.radians(self.tangent.dec)
        a = math.radians(pos.ra)
        d = math.radians(pos.dec)
        cos_dd = math.cos(a - a0)
        denom = (math.sin(d0) * math.sin(d)
                 + math.cos(d0) * math.cos(d) * cos_dd)
        if denom <= 1e-9:
            raise CutoutError("position too far from the tile tangent point")
        xi = math.cos(d) * math.sin(a - a0) / denom
        eta = (math.cos(d0) * math.sin(d)
               - math.sin(d0) * math.cos(d) * cos_dd) / denom
        return xi * self.px_per_rad, eta * self.px_per_rad

    def compose_buffer(self) -> tuple[np.ndarray, tuple[int, int]]:
        """Nearest-pixel mosaic of all tiles at native scale.

        Returns (buffer, (x0, y0)); buffer[yy, xx] covers plane pixel
        (x0 + xx, y0 + yy) with y increasing toward north. Later-listed
        tiles win where they overlap. Cached (tiles are immutable).
        """
        if self._buffer is not None:
            return self._buffer, self._buffer_origin
        if not self.tiles:
            raise CutoutError("tile set is empty")
        xs0 = [round(t.origin_dx) for t in self.tiles]
        ys0 = [round(t.origin_dy) for t in self.tiles]
        xs1 = [x + t.pixels.shape[1] for x, t in zip(xs0, self.tiles)]
        ys1 = [y + t.pixels.shape[0] for y, t in zip(ys0, self.tiles)]
        x0, y0 = min(xs0), min(ys0)
        buf = np.full((max(ys1) - y0, max(xs1) - x0), self.background,
                      dtype=np.uint16)
        for t, tx, ty in zip(self.tiles, xs0, ys0):
            img = t.pixels[::-1, :]  # flip rows so index 0 is the bottom
            h, w = img.shape
            buf[ty - y0:ty - y0 + h, tx - x0:tx - x0 + w] = img
        self._buffer = buf
        self._buffer_origin = (x0, y0)
        return buf, (x0, y0)

    def north_axes(self, center: SkyPos) -> tuple[np.ndarray, np.ndarray]:
        """Unit vectors (east_right, north_up) of the view at `center`,
        expressed in native plane pixels."""
        eps = 1e-6  # degrees
        cx, cy = self.project(center)
        nx, ny = self.project(SkyPos(center.ra, center.dec + eps))
        n = np.array([nx - cx, ny - cy])
        n /= np.linalg.norm(n)
        e = np.array([n[1], -n[0]])
        return e, n


@dataclass(frozen=True)
class CutoutRequest:
    center: SkyPos
    scale: float          # pixels per degree
    width: int
    height: int
    invert: bool = False
    overlay: str = "none"  # none | objects | spectra

    def __post_init__(self):
        if not (1 <= self.width <= MAX_DIM and 1 <= self.height <= MAX_DIM):
            raise CutoutError(
                f"width/height must be in [1, {MAX_DIM}]")
        if self.scale <= 0:
            raise CutoutError("scale must be positive")
        if self.overlay not in ("none", "objects", "spectra"):
            raise CutoutError(f"unknown overlay mode: {self.overlay}")


def mosaic(req: CutoutRequest, tiles: TileSet) -> np.ndarray:
    """Render a north-up cutout; returns a uint16 (height, width) array."""
    if not (tiles.min_scale <= req.scale <= tiles.max_scale):
        raise CutoutError(
            f"scale {req.scale} outside [{tiles.min_scale}, "
            f"{tiles.max_scale}] pixels/degree")
    buf, (bx0, by0) = tiles.compose_buffer()
    try:
        cx, cy = tiles.project(req.center)
    except CutoutError:
        # request far outside the projection: uniform background
        out = np.full((req.height, req.width), tiles.background,
                      dtype=np.uint16)
        return _finish(out, req)
    e, n = tiles.north_axes(req.center)

    s = tiles.pixel_scale / req.scale  # native pixels per output pixel
    jj, ii = np.meshgrid(np.arange(req.width), np.arange(req.height))
    ox = jj - (req.width - 1) / 2.0
    oy = (req.height - 1) / 2.0 - ii
    x = cx + s * (ox * e[0] + oy * n[0])
    y = cy + s * (ox * e[1] + oy * n[1])
    out = _bilinear(buf, x - bx0, y - by0, tiles.background)
    return _finish(out, req)


def _finish(img: np.ndarray, req: CutoutRequest) -> np.ndarray:
    if req.invert:
        img = (MAX_VALUE - img.astype(np.int64)).astype(np.uint16)
    return img


def _bilinear(buf: np.ndarray, x: np.ndarray, y: np.ndarray,
              background: int) -> np.ndarray:
    h, w = buf.shape
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    fx = x - x0
    fy = y - y0
    valid = (x >= 0) & (x <= w - 1) & (y >= 0) & (y <= h - 1)
    x0c = np.clip(x0, 0, w - 1)
    y0c = np.clip(y0, 0, h - 1)
    x1c = np.clip(x0 + 1, 0, w - 1)
    y1c = np.clip(y0 + 1, 0, h - 1)
    b = buf.astype(np.float64)
    val = (b[y0c, x0c] * (1 - fx) * (1 - fy)
           + b[y0c, x1c] * fx * (1 - fy)
           + b[y1c, x0c] * (1 - fx) * fy
           + b[y1c, x1c] * fx * fy)
    out = np.where(valid, np.rint(val), background)
    return np.clip(out, 0, MAX_VALUE).astype(np.uint16)


def project_to_cutout(req: CutoutRequest, tiles: TileSet,
                      pos: SkyPos) -> tuple[float, float]:
    """Output (col, row) pixel of a sky position under a request's view."""
    cx, cy = tiles.project(req.center)
    px, py = tiles.project(pos)
    e, n = tiles.north_axes(req.center)
    s = tiles.pixel_scale / req.scale
    dx = (px - cx)
    dy = (py - cy)
    ox = (dx * e[0] + dy * e[1]) / s
    oy = (dx * n[0] + dy * n[1]) / s
    col = ox + (req.width - 1) / 2.0
    row = (req.height - 1) / 2.0 - oy
    return col, row


MARKER_RADIUS = 4


def overlay_objects(image: np.ndarray, req: CutoutRequest, tiles: TileSet,
                    rows: list[dict]) -> np.ndarray:
    """Draw a circle-outline marker at each object's projected pixel."""
    img = image.copy()
    h, w = img.shape
    for obj in rows:
        try:
            col, row = project_to_cutout(
                req, tiles, SkyPos(obj["ra"], obj["dec"]))
        except CutoutError:
            continue
        ic, jc = int(round(row)), int(round(col))
        if not (-MARKER_RADIUS <= ic < h + MARKER_RADIUS
                and -MARKER_RADIUS <= jc < w + MARKER_RADIUS):
            continue
        for angle in range(0, 360, 10):
            di = int(round(MARKER_RADIUS * math.sin(math.radians(angle))))
            dj = int(round(MARKER_RADIUS * math.cos(math.radians(angle))))
            i, j = ic + di, jc + dj
            if 0 <= i < h and 0 <= j < w:
                img[i, j] = MAX_VALUE
    return img


# --- service --------------------------------------------------------------

class CutoutService:
    """HTTP front end: GET /cutout renders a binary P5 graymap."""

    def __init__(self, tiles: TileSet):
        self.tiles = tiles
        self.service = JsonHttpService()
        self.service.route("GET", "/cutout", self._handle_cutout)
        self.service.route("GET", "/cutout/info", self._handle_info)
        self.url: str | None = None

    def start(self, host: str = "127.0.0.1", port: int = 0) -> str:
        self.url = self.service.start(host, port)
        return self.url

    def stop(self):
        self.service.stop()

    def _handle_info(self, params, body):
        return {
            "tangent_ra": self.tiles.tangent.ra,
            "tangent_dec": self.tiles.tangent.dec,
            "pixel_scale": self.tiles.pixel_scale,
            "max_scale": self.tiles.max_scale,
            "min_scale": self.tiles.min_scale,
            "n_tiles": len(self.tiles.tiles),
            "n_objects": len(self.tiles.objects),
        }

    def _handle_cutout(self, params, body):
        req = self._parse_request(params)
        img = mosaic(req, self.tiles)
        if req.overlay != "none":
            rows = self.tiles.objects
            if req.overlay == "spectra":
                rows = [r for r in rows if r.get("has_spectrum")]
            img = overlay_objects(img, req, self.tiles, rows)
        headers = {
            "X-Cutout-Ra": repr(req.center.ra),
            "X-Cutout-Dec": repr(req.center.dec),
            "X-Cutout-Scale": repr(req.scale),
            "X-Cutout-Width": str(req.width),
            "X-Cutout-Height": str(req.height),
        }
        return ("image/x-portable-graymap", encode_pgm(img), headers)

    def _parse_request(self, params) -> CutoutRequest:
        for name in ("ra", "dec", "scale", "width", "height"):
            if name not in params:
                raise ServiceError("bad_request",
                                   f"missing query parameter: {name}", 400)
        try:
            ra = float(params["ra"])
            dec = float(params["dec"])
            scale = float(params["scale"])
            width = int(params["width"])
            height = int(params["height"])
        except ValueError as exc:
            raise ServiceError("bad_request", f"bad parameter: {exc}", 400)
        opt = params.get("opt", "")
        invert = opt.count("i") % 2 == 1
        overlay = "none"
        if "o" in opt:
            overlay = "objects"
        elif "s" in opt:
            overlay = "spectra"
        try:
            center = SkyPos(ra, dec)
            req = CutoutRequest(center, scale, width, height,
                                invert, overlay)
            if not (self.tiles.min_scale <= scale <= self.tiles.max_scale):
                raise CutoutError(
                    f"scale {scale} outside "
                    f"[{self.tiles.min_scale}, {self.tiles.max_scale}]")
        except (CutoutError, ValueError) as exc:
            raise ServiceError("bad_request", str(exc), 400)
        return req
