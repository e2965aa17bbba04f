"""Kernel correctness: pure backend vs brute-force oracles, and bit-for-bit
parity between the pure and compiled backends."""
from __future__ import annotations

import os
import subprocess
import sys

import numpy as np
import pytest

from stylesplit import backends
from stylesplit.backends import pure

import oracles

try:
    from stylesplit.backends import _core as compiled
except ImportError:  # pragma: no cover - environment without the extension
    compiled = None

BACKENDS = [pure] if compiled is None else [pure, compiled]


def _rand_masks(n, h=24, w=24, seed=0):
    rng = np.random.default_rng(seed)
    return [oracles.random_blob(rng, h, w, allow_empty=True).astype(np.uint8)
            for _ in range(n)]


@pytest.mark.parametrize("mod", BACKENDS, ids=lambda m: m.NAME)
def test_morphology_matches_bruteforce(mod):
    rng = np.random.default_rng(7)
    for m in _rand_masks(12, 16, 16, seed=5):
        r = int(rng.integers(0, 5))
        assert np.array_equal(mod.disk_erode(m, r).astype(bool), oracles.brute_erode(m, r))
        assert np.array_equal(mod.disk_dilate(m, r).astype(bool), oracles.brute_dilate(m, r))


@pytest.mark.parametrize("mod", BACKENDS, ids=lambda m: m.NAME)
def test_border_matches_bruteforce(mod):
    for m in _rand_masks(12, 20, 20, seed=6):
        rows, cols = mod.border_points(m)
        assert set(zip(rows.tolist(), cols.tolist())) == oracles.brute_border(m)
        # row-major emission order
        keys = rows.astype(np.int64) * m.shape[1] + cols
        assert np.all(np.diff(keys) > 0)


@pytest.mark.parametrize("mod", BACKENDS, ids=lambda m: m.NAME)
def test_count_within_matches_bruteforce(mod):
    rng = np.random.default_rng(8)
    masks = _rand_masks(10, 16, 16, seed=9)
    for g, p in zip(masks[::2], masks[1::2]):
        rg, cg = mod.border_points(g)
        rp, cp = mod.border_points(p)
        if len(rg) == 0 or len(rp) == 0:
            continue
        for tol in (0.1, 0.5, 0.85, 2.0):
            sx, sy = 0.6, 0.6
            got = mod.count_within(rg, cg, rp, cp, sx, sy, tol)
            want = 0
            for r, c in zip(rg.tolist(), cg.tolist()):
                hit = any(np.hypot((c - cc) * sx, (r - rr) * sy) <= tol
                          for rr, cc in zip(rp.tolist(), cp.tolist()))
                want += int(hit)
            assert got == want


@pytest.mark.parametrize("mod", BACKENDS, ids=lambda m: m.NAME)
def test_distance_field_matches_bruteforce(mod):
    rng = np.random.default_rng(10)
    for _ in range(6):
        h, w = 12, 14
        k = int(rng.integers(1, 8))
        rows = rng.integers(0, h, size=k).astype(np.int32)
        cols = rng.integers(0, w, size=k).astype(np.int32)
        sx, sy = 0.6, 0.8
        got = mod.distance_field(rows, cols, h, w, sx, sy)
        want = oracles.brute_distance_field(set(zip(rows.tolist(), cols.tolist())), (h, w), sx, sy)
        assert np.allclose(got, want, rtol=0, atol=1e-12)


@pytest.mark.parametrize("mod", BACKENDS, ids=lambda m: m.NAME)
def test_distance_field_rejects_empty(mod):
    empty = np.empty(0, dtype=np.int32)
    with pytest.raises(ValueError):
        mod.distance_field(empty, empty, 4, 4, 1.0, 1.0)


@pytest.mark.skipif(compiled is None, reason="compiled backend not built")
def test_backend_parity_bitwise():
    rng = np.random.default_rng(11)
    for m in _rand_masks(25, 32, 32, seed=12):
        r = int(rng.integers(0, 7))
        assert np.array_equal(pure.disk_erode(m, r), compiled.disk_erode(m, r))
        assert np.array_equal(pure.disk_dilate(m, r), compiled.disk_dilate(m, r))
        rows_p, cols_p = pure.border_points(m)
        rows_c, cols_c = compiled.border_points(m)
        assert np.array_equal(rows_p, rows_c) and np.array_equal(cols_p, cols_c)
        if len(rows_p):
            f = pure.distance_field(rows_p, cols_p, 32, 32, 0.6, 0.6)
            g = compiled.distance_field(rows_c, cols_c, 32, 32, 0.6, 0.6)
            assert np.array_equal(f, g)


def test_env_var_forces_pure_backend():
    code = "import stylesplit.backends as b; print(b.backend_name())"
    env = dict(os.environ, STYLESPLIT_BACKEND="pure")
    out = subprocess.run([sys.executable, "-c", code], capture_output=True,
                         text=True, env=env, check=True)
    assert out.stdout.strip() == "pure"


def test_active_backend_exports_kernels():
    for name in ("disk_erode", "disk_dilate", "border_points", "count_within",
                 "distance_field"):
        assert callable(getattr(backends, name))
    assert backends.backend_name() in ("pure", "compiled")
