"""Synthetic sky-survey data: a 3-archive federation of CSV catalogs plus
an image tile set with known star positions, all reproducible from a seed.

A set of "true" objects is drawn in a square footprint; each archive
detects a subset with Gaussian positional scatter at its own accuracy and
gets archive-specific attributes. Spurious archive-only objects pad each
catalog to the requested row count.
"""

from __future__ import annotations

import csv
import json
import math
import os

import numpy as np

from .sphere import ARCSEC_TO_RAD, RAD_TO_DEG

DEFAULT_CENTER = (181.3, -0.76)  # matches the worked example query
DEFAULT_HALFWIDTH_DEG = 1.0

ARCHIVES = {
    "SDSS": {
        "sigma_arcsec": 0.1,
        "detect_prob": 0.85,
        "wavelength": "optical 300-1000 nm",
    },
    "TWOMASS": {
        "sigma_arcsec": 0.2,
        "detect_prob": 0.45,
        "wavelength": "near-infrared 1.2-2.2 um",
    },
    "FIRST": {
        "sigma_arcsec": 1.0,
        "detect_prob": 0.15,
        "wavelength": "radio 20 cm",
    },
}


def _schema_sdss():
    return {
        "table_name": "PhotoPrimary",
        "description": "optical photometric catalog",
        "columns": [
            {"name": "objId", "type": "int64", "unit": "",
             "description": "unique object identifier"},
            {"name": "ra", "type": "float64", "unit": "deg",
             "description": "right ascension (J2000)"},
            {"name": "dec", "type": "float64", "unit": "deg",
             "description": "declination (J2000)"},
            {"name": "type", "type": "int64", "unit": "",
             "description": "morphological type: 3=galaxy, 6=star"},
            {"name": "run", "type": "int64", "unit": "",
             "description": "observing run number, 0-49"},
            {"name": "u", "type": "float64", "unit": "mag",
             "description": "u-band magnitude"},
            {"name": "g", "type": "float64", "unit": "mag",
             "description": "g-band magnitude"},
            {"name": "r", "type": "float64", "unit": "mag",
             "description": "r-band magnitude"},
            {"name": "i", "type": "float64", "unit": "mag",
             "description": "i-band magnitude"},
            {"name": "z", "type": "float64", "unit": "mag",
             "description": "z-band magnitude"},
        ],
        "key_column": "objId",
        "ra_column": "ra",
        "dec_column": "dec",
    }


def _schema_twomass():
    return {
        "table_name": "PhotoPrimary",
        "description": "near-infrared photometric catalog",
        "columns": [
            {"name": "objId", "type": "int64", "unit": "",
             "description": "unique object identifier"},
            {"name": "ra", "type": "float64", "unit": "deg",
             "description": "right ascension (J2000)"},
            {"name": "dec", "type": "float64", "unit": "deg",
             "description": "declination (J2000)"},
            {"name": "run", "type": "int64", "unit": "",
             "description": "observing run number, 0-49"},
            {"name": "m_j", "type": "float64", "unit": "mag",
             "description": "J-band magnitude"},
            {"name": "m_h", "type": "float64", "unit": "mag",
             "description": "H-band magnitude"},
            {"name": "m_k", "type": "float64", "unit": "mag",
             "description": "K-band magnitude"},
        ],
        "key_column": "objId",
        "ra_column": "ra",
        "dec_column": "dec",
    }


def _schema_first():
    return {
        "table_name": "PhotoPrimary",
        "description": "radio source catalog",
        "columns": [
            {"name": "objId", "type": "int64", "unit": "",
             "description": "unique object identifier"},
            {"name": "ra", "type": "float64", "unit": "deg",
             "description": "right ascension (J2000)"},
            {"name": "dec", "type": "float64", "unit": "deg",
             "description": "declination (J2000)"},
            {"name": "flux_20cm", "type": "float64", "unit": "mJy",
             "description": "integrated 20 cm flux density"},
        ],
        "key_column": "objId",
        "ra_column": "ra",
        "dec_column": "dec",
    }


_SCHEMAS = {"SDSS": _schema_sdss, "TWOMASS": _schema_twomass,
            "FIRST": _schema_first}


def _jitter(rng, ra, dec, sigma_arcsec):
    """Gaussian positional scatter, sigma per tangent-plane axis."""
    s_deg = sigma_arcsec * ARCSEC_TO_RAD * RAD_TO_DEG
    dra = rng.normal(0.0, s_deg, size=ra.shape) / np.cos(np.radians(dec))
    ddec = rng.normal(0.0, s_deg, size=dec.shape)
    return ra + dra, dec + ddec


def build_federation(outdir: str, rows_per_archive: int = 10000,
                     seed: int = 20020800,
                     center: tuple[float, float] = DEFAULT_CENTER,
                     halfwidth_deg: float = DEFAULT_HALFWIDTH_DEG) -> dict:
    """Write schema + data CSVs for the three archives; returns file paths.

    Returned dict: archive -> {"schema": path, "data": path,
    "sigma_arcsec": float, "wavelength": str}.
    """
    os.makedirs(outdir, exist_ok=True)
    rng = np.random.default_rng(seed)
    ra0, dec0 = center

    # enough true objects that each archive fills most of its rows from them
    n_true = int(rows_per_archive * 1.4)
    true_ra = rng.uniform(ra0 - halfwidth_deg, ra0 + halfwidth_deg, n_true)
    true_dec = rng.uniform(dec0 - halfwidth_deg, dec0 + halfwidth_deg,
                           n_true)
    true_type = np.where(rng.random(n_true) < 0.6, 3, 6)
    true_i = rng.uniform(14.0, 22.0, n_true)
    # infrared magnitude correlated with i so that i - m_j spans (0, 4)
    true_mj = true_i - rng.uniform(0.0, 4.0, n_true)
    true_run = rng.integers(0, 50, n_true)

    out = {}
    next_id = 1
    for archive, props in ARCHIVES.items():
        detected = np.nonzero(
            rng.random(n_true) < props["detect_prob"])[0]
        n_det = min(len(detected), rows_per_archive)
        detected = detected[:n_det]
        n_spurious = rows_per_archive - n_det

        ra = np.concatenate([
            true_ra[detected],
            rng.uniform(ra0 - halfwidth_deg, ra0 + halfwidth_deg,
                        n_spurious)])
        dec = np.concatenate([
            true_dec[detected],
            rng.uniform(dec0 - halfwidth_deg, dec0 + halfwidth_deg,
                        n_spurious)])
        ra, dec = _jitter(rng, ra, dec, props["sigma_arcsec"])
        obj_ids = np.arange(next_id, next_id + rows_per_archive)
        next_id += rows_per_archive

        schema = _SCHEMAS[archive]()
        rows: dict[str, np.ndarray] = {
            "objId": obj_ids, "ra": ra, "dec": dec}
        if archive == "SDSS":
            rows["type"] = np.concatenate([
                true_type[detected],
                np.where(rng.random(n_spurious) < 0.6, 3, 6)])
            rows["run"] = np.concatenate([
                true_run[detected], rng.integers(0, 50, n_spurious)])
            i_mag = np.concatenate([
                true_i[detected], rng.uniform(14.0, 22.0, n_spurious)])
            rows["i"] = i_mag
            rows["u"] = i_mag + rng.normal(1.5, 0.5, rows_per_archive)
            rows["g"] = i_mag + rng.normal(0.9, 0.3, rows_per_archive)
            rows["r"] = i_mag + rng.normal(0.4, 0.2, rows_per_archive)
            rows["z"] = i_mag - rng.normal(0.2, 0.2, rows_per_archive)
        elif archive == "TWOMASS":
            rows["run"] = np.concatenate([
                true_run[detected], rng.integers(0, 50, n_spurious)])
            mj = np.concatenate([
                true_mj[detected], rng.uniform(10.0, 18.0, n_spurious)])
            rows["m_j"] = mj
            rows["m_h"] = mj - rng.normal(0.3, 0.1, rows_per_archive)
            rows["m_k"] = mj - rng.normal(0.5, 0.1, rows_per_archive)
        else:
            rows["flux_20cm"] = rng.lognormal(1.0, 1.2, rows_per_archive)

        schema_path = os.path.join(outdir, f"{archive.lower()}_schema.json")
        data_path = os.path.join(outdir, f"{archive.lower()}_data.csv")
        with open(schema_path, "w", encoding="utf-8") as fh:
            json.dump(schema, fh, indent=2)
        names = [c["name"] for c in schema["columns"]]
        with open(data_path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(names)
            for k in range(rows_per_archive):
                writer.writerow([
                    _fmt(rows[n][k]) for n in names
                ])
        out[archive] = {
            "schema": schema_path,
            "data": data_path,
            "sigma_arcsec": props["sigma_arcsec"],
            "wavelength": props["wavelength"],
            "footprint": {"ra": ra0, "dec": dec0,
                          "radius_arcmin": halfwidth_deg * 60.0 * 1.5},
        }
    return out


def _fmt(v):
    if isinstance(v, (np.integer, int)):
        return int(v)
    return repr(float(v))


def write_node_config(path: str, archive: str, files: dict,
                      index_level: int = 14, stats: bool = True,
                      port: int = 0) -> str:
    cfg = {
        "archive_name": archive,
        "sigma_arcsec": files["sigma_arcsec"],
        "host": "127.0.0.1",
        "port": port,
        "tables": [{"schema": files["schema"], "data": files["data"]}],
        "index_level": index_level,
        "stats_enabled": stats,
        "wavelength_coverage": files["wavelength"],
        "sky_coverage": [files["footprint"]],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(cfg, fh, indent=2)
    return path


# --- synthetic image tiles ------------------------------------------------

def build_tileset(outdir: str, seed: int = 7,
                  tangent: tuple[float, float] = DEFAULT_CENTER,
                  n_tiles: int = 4, tile_px: int = 256,
                  pixel_scale: float = 7200.0, n_stars: int = 120) -> str:
    """Random star-field tiles sharing one gnomonic tangent point.

    pixel_scale is pixels per degree. Tiles form a 2x2 block around the
    tangent point; stars are written to stars.csv as ground truth for the
    overlay and geometry oracles. Returns the manifest path.
    """
    from .cutout import write_pgm  # local import to avoid a cycle

    os.makedirs(outdir, exist_ok=True)
    rng = np.random.default_rng(seed)
    side = int(math.isqrt(n_tiles))
    if side * side != n_tiles:
        raise ValueError("n_tiles must be a perfect square")

    half = side * tile_px // 2
    manifest = {
        "tangent_ra": tangent[0],
        "tangent_dec": tangent[1],
        "pixel_scale": pixel_scale,
        "max_scale": pixel_scale,
        "background": 0,
        "tiles": [],
        "objects_file": "stars.csv",
    }

    # star positions in native plane pixels relative to the tangent point
    star_x = rng.uniform(-half + 8, half - 8, n_stars)
    star_y = rng.uniform(-half + 8, half - 8, n_stars)
    star_amp = rng.uniform(12000, 60000, n_stars)
    has_spec = rng.random(n_stars) < 0.3

    px_per_rad = pixel_scale * RAD_TO_DEG
    rows = []
    t_ra = math.radians(tangent[0])
    t_dec = math.radians(tangent[1])
    for k in range(n_stars):
        xi = star_x[k] / px_per_rad
        eta = star_y[k] / px_per_rad
        # inverse gnomonic
        rho = math.hypot(xi, eta)
        c = math.atan(rho)
        if rho == 0:
            dec = t_dec
            ra = t_ra
        else:
            dec = math.asin(math.cos(c) * math.sin(t_dec)
                            + eta * math.sin(c) * math.cos(t_dec) / rho)
            ra = t_ra + math.atan2(
                xi * math.sin(c),
                rho * math.cos(t_dec) * math.cos(c)
                - eta * math.sin(t_dec) * math.sin(c))
        rows.append([k + 1, math.degrees(ra) % 360.0, math.degrees(dec),
                     int(has_spec[k])])

    with open(os.path.join(outdir, "stars.csv"), "w", encoding="utf-8",
              newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["objId", "ra", "dec", "has_spectrum"])
        writer.writerows(rows)

    for ty in range(side):
        for tx in range(side):
            dx = -half + tx * tile_px
            dy = -half + ty * tile_px
            img = np.zeros((tile_px, tile_px), dtype=np.uint16)
            noise = rng.integers(200, 900, size=img.shape)
            img += noise.astype(np.uint16)
            for k in range(n_stars):
                cx = star_x[k] - dx
                cy = star_y[k] - dy
                if not (-4 <= cx < tile_px + 4 and -4 <= cy < tile_px + 4):
                    continue
                _draw_star(img, cx, cy, star_amp[k])
            name = f"tile_{tx}_{ty}.pgm"
            write_pgm(os.path.join(outdir, name), img)
            manifest["tiles"].append({"file": name, "dx": dx, "dy": dy})

    manifest_path = os.path.join(outdir, "manifest.json")
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
    return manifest_path


def _draw_star(img: np.ndarray, cx: float, cy: float, amp: float):
    """Additive Gaussian blob; tile row 0 is the TOP of the tile."""
    h, w = img.shape
    x0 = int(max(0, math.floor(cx - 4)))
    x1 = int(min(w, math.ceil(cx + 5)))
    ry = (h - 1) - cy  # plane y (up) -> array row (down)
    y0 = int(max(0, math.floor(ry - 4)))
    y1 = int(min(h, math.ceil(ry + 5)))
    if x0 >= x1 or y0 >= y1:
        return
    ys, xs = np.mgrid[y0:y1, x0:x1]
    blob = amp * np.exp(-0.5 * (((xs - cx) / 1.2) ** 2
                                + ((ys - ry) / 1.2) ** 2))
    region = img[y0:y1, x0:x1].astype(np.float64) + blob
    img[y0:y1, x0:x1] = np.clip(region, 0, 65535).astype(np.uint16)
