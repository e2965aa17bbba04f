"""Cohort-on-disk format.

One directory per scan holding 8-bit binary PGM (P5) rasters, written as
`image_###.pgm` / `mask_###.pgm` pairs plus a `meta.json` with the scan id
and voxel spacing. Mask rasters use 0 = background, 255 = foreground. The
cohort root carries `cohort.json` with the style labels, the
pretrain/optimize split, the style specs, and the seed.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .masks import Mask, Scan, Slice
from .simulate import StyledCohort, StyleSpec


def write_pgm(path: Path, data: np.ndarray) -> None:
    data = np.ascontiguousarray(data, dtype=np.uint8)
    if data.ndim != 2:
        raise ValueError("PGM rasters are 2D")
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def read_pgm(path: Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if not raw.startswith(b"P5"):
        raise ValueError(f"{path}: not a binary PGM (P5) file")
    # header = magic + width/height/maxval tokens; '#' starts a comment
    tokens: list[int] = []
    pos = 2
    while len(tokens) < 3:
        if pos >= len(raw):
            raise ValueError(f"{path}: truncated PGM header")
        ch = raw[pos:pos + 1]
        if ch.isspace():
            pos += 1
        elif ch == b"#":
            pos = raw.index(b"\n", pos) + 1
        else:
            end = pos
            while end < len(raw) and not raw[end:end + 1].isspace():
                end += 1
            tokens.append(int(raw[pos:end]))
            pos = end
    w, h, maxval = tokens
    if maxval != 255:
        raise ValueError(f"{path}: expected maxval 255, got {maxval}")
    pos += 1  # single whitespace byte after the header
    data = np.frombuffer(raw, dtype=np.uint8, count=h * w, offset=pos)
    return data.reshape(h, w).copy()


def _scan_dir(root: Path, scan_id: str) -> Path:
    return Path(root) / scan_id


def save_scan(root: Path, scan: Scan) -> None:
    d = _scan_dir(root, scan.id)
    d.mkdir(parents=True, exist_ok=True)
    for k, sl in enumerate(scan.slices):
        write_pgm(d / f"image_{k:03d}.pgm", sl.image)
        write_pgm(d / f"mask_{k:03d}.pgm", np.where(sl.mask.pixels, 255, 0))
    meta = {"id": scan.id, "spacing": list(scan.spacing), "slices": len(scan.slices)}
    (d / "meta.json").write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")


def load_scan(scan_dir: Path) -> Scan:
    scan_dir = Path(scan_dir)
    meta = json.loads((scan_dir / "meta.json").read_text())
    spacing = tuple(float(v) for v in meta["spacing"])
    slices = []
    for k in range(int(meta["slices"])):
        img = read_pgm(scan_dir / f"image_{k:03d}.pgm")
        raster = read_pgm(scan_dir / f"mask_{k:03d}.pgm")
        mask = Mask(raster > 127, spacing=spacing[:2])
        slices.append(Slice(image=img, mask=mask))
    return Scan(id=str(meta["id"]), slices=tuple(slices), spacing=spacing)


def save_cohort(root: Path, cohort: StyledCohort) -> None:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    for scan in cohort.scans:
        save_scan(root, scan)
    doc = {
        "seed": cohort.seed,
        "specs": [
            {"operation": s.operation, "magnitude_mean": s.magnitude_mean,
             "magnitude_std": s.magnitude_std}
            for s in cohort.specs
        ],
        "style_labels": dict(sorted(cohort.style_labels.items())),
        "pretrain_ids": list(cohort.pretrain_ids),
        "optimize_ids": list(cohort.optimize_ids),
        "scan_ids": [s.id for s in cohort.scans],
    }
    (root / "cohort.json").write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def load_cohort(root: Path) -> StyledCohort:
    root = Path(root)
    doc = json.loads((root / "cohort.json").read_text())
    scans = tuple(load_scan(root / sid) for sid in doc["scan_ids"])
    specs = tuple(
        StyleSpec(s["operation"], float(s["magnitude_mean"]), float(s["magnitude_std"]))
        for s in doc["specs"]
    )
    return StyledCohort(
        scans=scans,
        style_labels={k: int(v) for k, v in doc["style_labels"].items()},
        pretrain_ids=tuple(doc["pretrain_ids"]),
        optimize_ids=tuple(doc["optimize_ids"]),
        specs=specs,
        seed=int(doc["seed"]),
    )
