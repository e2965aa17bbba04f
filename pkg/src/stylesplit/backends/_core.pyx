# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled pixel-grid kernels.

Semantics mirror ``stylesplit.backends.pure`` exactly; the test suite
asserts bit-for-bit parity between the two backends. Morphology runs on an
exact integer squared Euclidean distance transform (two-pass column sweep
plus per-row lower envelope of parabolas), so results are identical to the
brute-force disk definition.
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

NAME = "compiled"

cdef int _INF = 1 << 29


cdef void _sq_edt(
    const cnp.uint8_t[:, ::1] src,
    cnp.int32_t[:, ::1] out,
    cnp.int64_t[::1] f,
    cnp.intp_t[::1] v,
    cnp.float64_t[::1] z,
) noexcept nogil:
    """Squared Euclidean distance (pixel units) to the nearest source pixel.

    Pixels with no source anywhere keep a large sentinel. f, v, z are
    caller-provided work buffers of sizes w, w, w+1.
    """
    cdef Py_ssize_t h = src.shape[0]
    cdef Py_ssize_t w = src.shape[1]
    cdef Py_ssize_t i, j, q, k, n, r
    cdef int d
    cdef double s
    cdef cnp.int64_t fq, dist

    # Pass 1: per column, city-block distance in rows to the nearest source.
    for j in range(w):
        d = _INF
        for i in range(h):
            if src[i, j]:
                d = 0
            elif d < _INF:
                d += 1
            out[i, j] = d
        d = _INF
        for i in range(h - 1, -1, -1):
            if src[i, j]:
                d = 0
            elif d < _INF:
                d += 1
            if d < out[i, j]:
                out[i, j] = d

    # Pass 2: per row, lower envelope of parabolas j -> f(q) + (j - q)^2
    # where f(q) is the squared column distance from pass 1.
    for i in range(h):
        for j in range(w):
            fq = out[i, j]
            f[j] = fq * fq if fq < _INF else (<cnp.int64_t>_INF) * _INF
        n = 0
        v[0] = 0
        z[0] = -1e300
        z[1] = 1e300
        for q in range(1, w):
            r = v[n]
            s = (<double>(f[q] - f[r]) + <double>(q * q - r * r)) / <double>(2 * (q - r))
            while s <= z[n]:
                n -= 1
                r = v[n]
                s = (<double>(f[q] - f[r]) + <double>(q * q - r * r)) / <double>(2 * (q - r))
            n += 1
            v[n] = q
            z[n] = s
            z[n + 1] = 1e300
        k = 0
        for j in range(w):
            while z[k + 1] < j:
                k += 1
            r = v[k]
            dist = f[r] + <cnp.int64_t>((j - r) * (j - r))
            out[i, j] = <cnp.int32_t>(dist if dist < _INF else _INF)


def disk_dilate(cnp.ndarray[cnp.uint8_t, ndim=2] mask, int radius):
    """Union of Euclidean disks of `radius` around every foreground pixel."""
    if radius == 0:
        return mask.copy()
    cdef Py_ssize_t h = mask.shape[0]
    cdef Py_ssize_t w = mask.shape[1]
    cdef cnp.ndarray[cnp.int32_t, ndim=2] dist = np.empty((h, w), dtype=np.int32)
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] out = np.empty((h, w), dtype=np.uint8)
    f_arr = np.empty(w, dtype=np.int64)
    v_arr = np.empty(w, dtype=np.intp)
    z_arr = np.empty(w + 1, dtype=np.float64)
    cdef const cnp.uint8_t[:, ::1] mv = mask
    cdef cnp.int32_t[:, ::1] dv = dist
    cdef cnp.uint8_t[:, ::1] ov = out
    cdef cnp.int64_t[::1] f = f_arr
    cdef cnp.intp_t[::1] v = v_arr
    cdef cnp.float64_t[::1] z = z_arr
    cdef int r2 = radius * radius
    cdef Py_ssize_t i, j
    with nogil:
        _sq_edt(mv, dv, f, v, z)
        for i in range(h):
            for j in range(w):
                ov[i, j] = 1 if dv[i, j] <= r2 else 0
    return out


def disk_erode(cnp.ndarray[cnp.uint8_t, ndim=2] mask, int radius):
    """Pixels whose whole disk neighborhood lies inside the grid and the
    foreground. Cells beyond the grid edge count as background."""
    if radius == 0:
        return mask.copy()
    cdef Py_ssize_t h = mask.shape[0]
    cdef Py_ssize_t w = mask.shape[1]
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] inverted = np.empty((h, w), dtype=np.uint8)
    cdef cnp.ndarray[cnp.int32_t, ndim=2] dist = np.empty((h, w), dtype=np.int32)
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] out = np.empty((h, w), dtype=np.uint8)
    f_arr = np.empty(w, dtype=np.int64)
    v_arr = np.empty(w, dtype=np.intp)
    z_arr = np.empty(w + 1, dtype=np.float64)
    cdef const cnp.uint8_t[:, ::1] mv = mask
    cdef cnp.uint8_t[:, ::1] iv = inverted
    cdef cnp.int32_t[:, ::1] dv = dist
    cdef cnp.uint8_t[:, ::1] ov = out
    cdef cnp.int64_t[::1] f = f_arr
    cdef cnp.intp_t[::1] v = v_arr
    cdef cnp.float64_t[::1] z = z_arr
    cdef int r2 = radius * radius
    cdef Py_ssize_t i, j
    cdef long long edge
    with nogil:
        for i in range(h):
            for j in range(w):
                iv[i, j] = 0 if mv[i, j] else 1
        _sq_edt(iv, dv, f, v, z)
        for i in range(h):
            for j in range(w):
                if not mv[i, j] or dv[i, j] <= r2:
                    ov[i, j] = 0
                    continue
                # Nearest out-of-grid cell lies straight toward an edge.
                edge = i + 1
                if j + 1 < edge:
                    edge = j + 1
                if h - i < edge:
                    edge = h - i
                if w - j < edge:
                    edge = w - j
                ov[i, j] = 0 if edge * edge <= r2 else 1
    return out


def border_points(cnp.ndarray[cnp.uint8_t, ndim=2] mask):
    """Inner 4-connectivity border, returned row-major as (rows, cols)."""
    cdef Py_ssize_t h = mask.shape[0]
    cdef Py_ssize_t w = mask.shape[1]
    cdef const cnp.uint8_t[:, ::1] mv = mask
    cdef Py_ssize_t i, j, count = 0
    with nogil:
        for i in range(h):
            for j in range(w):
                if mv[i, j] and (
                    i == 0 or i == h - 1 or j == 0 or j == w - 1
                    or not mv[i - 1, j] or not mv[i + 1, j]
                    or not mv[i, j - 1] or not mv[i, j + 1]
                ):
                    count += 1
    cdef cnp.ndarray[cnp.int32_t, ndim=1] rows = np.empty(count, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] cols = np.empty(count, dtype=np.int32)
    cdef cnp.int32_t[::1] rv = rows
    cdef cnp.int32_t[::1] cv = cols
    cdef Py_ssize_t k = 0
    with nogil:
        for i in range(h):
            for j in range(w):
                if mv[i, j] and (
                    i == 0 or i == h - 1 or j == 0 or j == w - 1
                    or not mv[i - 1, j] or not mv[i + 1, j]
                    or not mv[i, j - 1] or not mv[i, j + 1]
                ):
                    rv[k] = <cnp.int32_t>i
                    cv[k] = <cnp.int32_t>j
                    k += 1
    return rows, cols


def count_within(
    cnp.ndarray[cnp.int32_t, ndim=1] rows_a,
    cnp.ndarray[cnp.int32_t, ndim=1] cols_a,
    cnp.ndarray[cnp.int32_t, ndim=1] rows_b,
    cnp.ndarray[cnp.int32_t, ndim=1] cols_b,
    double spacing_x,
    double spacing_y,
    double tolerance_mm,
):
    """Number of points in A whose nearest point of B is within tolerance.

    B must be sorted by row ascending (border_points emits row-major
    order). Candidate B points are restricted to the row/column band that
    could possibly be within tolerance; the band is conservative so the
    count stays exact.
    """
    cdef Py_ssize_t na = rows_a.shape[0]
    cdef Py_ssize_t nb = rows_b.shape[0]
    if na == 0 or nb == 0:
        return 0
    cdef const cnp.int32_t[::1] ra = rows_a
    cdef const cnp.int32_t[::1] ca = cols_a
    cdef const cnp.int32_t[::1] rb = rows_b
    cdef const cnp.int32_t[::1] cb = cols_b
    cdef double limit = tolerance_mm * tolerance_mm
    cdef int band_r = <int>(tolerance_mm / spacing_y) + 1
    cdef int band_c = <int>(tolerance_mm / spacing_x) + 1
    cdef Py_ssize_t i, lo, hi, mid, j
    cdef int row_min, row_max, col_min, col_max
    cdef double dx, dy, sq
    cdef Py_ssize_t hits = 0
    cdef bint found

    with nogil:
        for i in range(na):
            row_min = ra[i] - band_r
            row_max = ra[i] + band_r
            col_min = ca[i] - band_c
            col_max = ca[i] + band_c
            # First B index with row >= row_min.
            lo = 0
            hi = nb
            while lo < hi:
                mid = (lo + hi) >> 1
                if rb[mid] < row_min:
                    lo = mid + 1
                else:
                    hi = mid
            found = False
            j = lo
            while j < nb and rb[j] <= row_max:
                if col_min <= cb[j] <= col_max:
                    dy = <double>(ra[i] - rb[j]) * spacing_y
                    dx = <double>(ca[i] - cb[j]) * spacing_x
                    sq = dx * dx + dy * dy
                    if sq <= limit:
                        found = True
                        break
                j += 1
            if found:
                hits += 1
    return int(hits)


def distance_field(
    cnp.ndarray[cnp.int32_t, ndim=1] rows,
    cnp.ndarray[cnp.int32_t, ndim=1] cols,
    Py_ssize_t height,
    Py_ssize_t width,
    double spacing_x,
    double spacing_y,
):
    """Exact per-pixel minimum distance (mm) from pixel centers to the
    given points, by direct minimization over all points."""
    cdef Py_ssize_t k = rows.shape[0]
    if k == 0:
        raise ValueError("distance_field requires at least one point")
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((height, width), dtype=np.float64)
    cdef cnp.float64_t[:, ::1] ov = out
    cdef const cnp.int32_t[::1] rv = rows
    cdef const cnp.int32_t[::1] cv = cols
    cdef Py_ssize_t i, j, p
    cdef double dx, dy, sq, best
    with nogil:
        for i in range(height):
            for j in range(width):
                best = 1e300
                for p in range(k):
                    dy = <double>(<cnp.int32_t>i - rv[p]) * spacing_y
                    dx = <double>(<cnp.int32_t>j - cv[p]) * spacing_x
                    sq = dx * dx + dy * dy
                    if sq < best:
                        best = sq
                ov[i, j] = sqrt(best)
    return out
