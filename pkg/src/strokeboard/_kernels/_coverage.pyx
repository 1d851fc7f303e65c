# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled coverage kernel: sparse min-distance field of a polyline.

Semantics must match numpy_impl.coverage_entries exactly: same formulas,
same chord order, strict-less-than minimum updates, ties to lowest chord.
Vertices arrive in a stroke-local frame anchored at the integer (ax, ay);
all distance math stays in that frame so the field is bitwise invariant
under exact integer translations of the stroke.
"""

from libc.math cimport sqrt, ceil, floor, INFINITY

import numpy as np
cimport numpy as cnp

cnp.import_array()

cdef double _CAST_CLAMP = 2147483648.0  # 2^31: keep double->long casts defined


cdef inline long _ceil_long(double x):
    if x < -_CAST_CLAMP: x = -_CAST_CLAMP
    elif x > _CAST_CLAMP: x = _CAST_CLAMP
    return <long>ceil(x)


cdef inline long _floor_long(double x):
    if x < -_CAST_CLAMP: x = -_CAST_CLAMP
    elif x > _CAST_CLAMP: x = _CAST_CLAMP
    return <long>floor(x)


def coverage_entries(vertices_local, double band, int height, int width,
                     double ax=0.0, double ay=0.0):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] verts = np.ascontiguousarray(
        vertices_local, dtype=np.float64
    )
    cdef Py_ssize_t n_chords = verts.shape[0] - 1
    empty = (
        np.empty(0, dtype=np.int64),
        np.empty(0, dtype=np.float64),
        np.empty(0, dtype=np.int32),
        np.empty(0, dtype=np.float64),
    )
    if n_chords < 1:
        return empty
    cdef long iax = <long>ax
    cdef long iay = <long>ay

    cdef double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY
    cdef Py_ssize_t k
    for k in range(verts.shape[0]):
        if verts[k, 0] < xmin: xmin = verts[k, 0]
        if verts[k, 0] > xmax: xmax = verts[k, 0]
        if verts[k, 1] < ymin: ymin = verts[k, 1]
        if verts[k, 1] > ymax: ymax = verts[k, 1]

    cdef long col0 = _ceil_long(xmin - band - 0.5) + iax
    cdef long col1 = _floor_long(xmax + band - 0.5) + iax
    cdef long row0 = _ceil_long(ymin - band - 0.5) + iay
    cdef long row1 = _floor_long(ymax + band - 0.5) + iay
    if col0 < 0: col0 = 0
    if col1 > width - 1: col1 = width - 1
    if row0 < 0: row0 = 0
    if row1 > height - 1: row1 = height - 1
    if col0 > col1 or row0 > row1:
        return empty

    cdef long bw = col1 - col0 + 1
    cdef long bh = row1 - row0 + 1
    cdef cnp.ndarray[cnp.float64_t, ndim=2] dbuf = np.full((bh, bw), np.inf)
    cdef cnp.ndarray[cnp.int32_t, ndim=2] cbuf = np.full((bh, bw), -1, dtype=np.int32)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] ubuf = np.zeros((bh, bw))

    cdef Py_ssize_t c
    cdef double x0, y0, x1, y1, ex, ey, ll, qx, qy, u, dx, dy, rx, ry, d
    cdef double lo, hi
    cdef long cc0, cc1, rr0, rr1, row, col

    for c in range(n_chords):
        x0 = verts[c, 0]; y0 = verts[c, 1]
        x1 = verts[c + 1, 0]; y1 = verts[c + 1, 1]
        lo = x0 if x0 < x1 else x1
        hi = x0 if x0 > x1 else x1
        cc0 = _ceil_long(lo - band - 0.5) + iax
        cc1 = _floor_long(hi + band - 0.5) + iax
        lo = y0 if y0 < y1 else y1
        hi = y0 if y0 > y1 else y1
        rr0 = _ceil_long(lo - band - 0.5) + iay
        rr1 = _floor_long(hi + band - 0.5) + iay
        if cc0 < col0: cc0 = col0
        if cc1 > col1: cc1 = col1
        if rr0 < row0: rr0 = row0
        if rr1 > row1: rr1 = row1
        if cc0 > cc1 or rr0 > rr1:
            continue
        ex = x1 - x0
        ey = y1 - y0
        ll = ex * ex + ey * ey
        for row in range(rr0, rr1 + 1):
            qy = <double>(row - iay) + 0.5
            dy = qy - y0
            for col in range(cc0, cc1 + 1):
                qx = <double>(col - iax) + 0.5
                dx = qx - x0
                if ll > 0.0:
                    u = (dx * ex + dy * ey) / ll
                    if u < 0.0: u = 0.0
                    elif u > 1.0: u = 1.0
                else:
                    u = 0.0
                rx = dx - u * ex
                ry = dy - u * ey
                d = sqrt(rx * rx + ry * ry)
                if d < dbuf[row - row0, col - col0]:
                    dbuf[row - row0, col - col0] = d
                    cbuf[row - row0, col - col0] = <cnp.int32_t>c
                    ubuf[row - row0, col - col0] = u

    # Count and extract entries with d < band in row-major scan order.
    cdef Py_ssize_t n = 0
    cdef long r2, c2
    for r2 in range(bh):
        for c2 in range(bw):
            if dbuf[r2, c2] < band:
                n += 1
    cdef cnp.ndarray[cnp.int64_t, ndim=1] pix = np.empty(n, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] dist = np.empty(n)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] chord = np.empty(n, dtype=np.int32)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] uu = np.empty(n)
    cdef Py_ssize_t i = 0
    for r2 in range(bh):
        for c2 in range(bw):
            if dbuf[r2, c2] < band:
                pix[i] = (r2 + row0) * (<cnp.int64_t>width) + (c2 + col0)
                dist[i] = dbuf[r2, c2]
                chord[i] = cbuf[r2, c2]
                uu[i] = ubuf[r2, c2]
                i += 1
    return pix, dist, chord, uu
