"""Disk round-trips for the PGM/JSON cohort format."""
from __future__ import annotations

import numpy as np
import pytest

from stylesplit.cohort_io import (
    load_cohort,
    load_scan,
    read_pgm,
    save_cohort,
    save_scan,
    write_pgm,
)
from stylesplit.simulate import StyleSpec, build_cohort


def test_pgm_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    data = rng.integers(0, 256, size=(9, 13)).astype(np.uint8)
    p = tmp_path / "x.pgm"
    write_pgm(p, data)
    assert np.array_equal(read_pgm(p), data)


def test_pgm_header_with_comment(tmp_path):
    p = tmp_path / "c.pgm"
    body = bytes(range(6))
    p.write_bytes(b"P5\n# a comment\n3 2\n255\n" + body)
    got = read_pgm(p)
    assert got.shape == (2, 3)
    assert got.tobytes() == body


def test_pgm_rejects_other_formats(tmp_path):
    p = tmp_path / "bad.pgm"
    p.write_bytes(b"P2\n2 2\n255\n0 1 2 3")
    with pytest.raises(ValueError):
        read_pgm(p)
    q = tmp_path / "bad16.pgm"
    q.write_bytes(b"P5\n2 2\n65535\n" + bytes(8))
    with pytest.raises(ValueError):
        read_pgm(q)


def _small_cohort(seed=3):
    specs = [StyleSpec("erosion", 6, 2), StyleSpec("dilation", 6, 2)]
    return build_cohort(seed, specs, n_scans=4, pretrain_count=2, slices_per_scan=3,
                        grid=(64, 64))


def test_scan_round_trip(tmp_path):
    scan = _small_cohort().scans[0]
    save_scan(tmp_path, scan)
    back = load_scan(tmp_path / scan.id)
    assert back.id == scan.id
    assert back.spacing == scan.spacing
    assert len(back) == len(scan)
    for a, b in zip(scan, back):
        assert np.array_equal(a.image, b.image)
        assert np.array_equal(a.mask.pixels, b.mask.pixels)
        assert a.mask.spacing == b.mask.spacing


def test_cohort_round_trip(tmp_path):
    cohort = _small_cohort()
    save_cohort(tmp_path, cohort)
    assert (tmp_path / "cohort.json").exists()
    back = load_cohort(tmp_path)
    assert back.seed == cohort.seed
    assert back.specs == cohort.specs
    assert back.style_labels == cohort.style_labels
    assert back.pretrain_ids == cohort.pretrain_ids
    assert back.optimize_ids == cohort.optimize_ids
    for a, b in zip(cohort.scans, back.scans):
        assert a.id == b.id
        for sa, sb in zip(a, b):
            assert np.array_equal(sa.image, sb.image)
            assert np.array_equal(sa.mask.pixels, sb.mask.pixels)


def test_cohort_json_deterministic(tmp_path):
    cohort = _small_cohort()
    save_cohort(tmp_path / "a", cohort)
    save_cohort(tmp_path / "b", cohort)
    a = (tmp_path / "a" / "cohort.json").read_bytes()
    b = (tmp_path / "b" / "cohort.json").read_bytes()
    assert a == b
    ia = (tmp_path / "a" / "scan_000" / "image_000.pgm").read_bytes()
    ib = (tmp_path / "b" / "scan_000" / "image_000.pgm").read_bytes()
    assert ia == ib
