"""Pure-NumPy coverage kernel (fallback when the compiled extension is absent).

Must stay numerically interchangeable with the Cython kernel: same formulas,
same chord iteration order, strict-less-than minimum updates.

Vertices arrive in a stroke-local frame whose origin is the integer-valued
``(ax, ay)`` anchor; all distance math happens in that frame, so the field is
bitwise invariant under exact integer translations of the stroke.
"""

from __future__ import annotations

import math

import numpy as np


def _empty():
    return (
        np.empty(0, dtype=np.int64),
        np.empty(0, dtype=np.float64),
        np.empty(0, dtype=np.int32),
        np.empty(0, dtype=np.float64),
    )


def coverage_entries(
    vertices_local: np.ndarray,
    band: float,
    height: int,
    width: int,
    ax: float = 0.0,
    ay: float = 0.0,
):
    """Sparse min-distance field of a polyline over its coverage band.

    For every pixel whose center lies within ``band`` of the polyline,
    returns (flat_pixel_index, distance, nearest_chord_index, chord_param).
    Ties go to the lowest chord index. Pixel centers are at (col+0.5, row+0.5)
    in global coordinates, i.e. (col-ax+0.5, row-ay+0.5) locally.
    """
    verts = np.asarray(vertices_local, dtype=np.float64)
    n_chords = len(verts) - 1
    if n_chords < 1:
        return _empty()
    iax = int(ax)
    iay = int(ay)

    xmin = float(verts[:, 0].min()) - band
    xmax = float(verts[:, 0].max()) + band
    ymin = float(verts[:, 1].min()) - band
    ymax = float(verts[:, 1].max()) + band
    col0 = max(0, math.ceil(xmin - 0.5) + iax)
    col1 = min(width - 1, math.floor(xmax - 0.5) + iax)
    row0 = max(0, math.ceil(ymin - 0.5) + iay)
    row1 = min(height - 1, math.floor(ymax - 0.5) + iay)
    if col0 > col1 or row0 > row1:
        return _empty()

    bw = col1 - col0 + 1
    bh = row1 - row0 + 1
    dbuf = np.full((bh, bw), np.inf, dtype=np.float64)
    cbuf = np.full((bh, bw), -1, dtype=np.int32)
    ubuf = np.zeros((bh, bw), dtype=np.float64)

    for c in range(n_chords):
        x0, y0 = verts[c]
        x1, y1 = verts[c + 1]
        cc0 = max(col0, math.ceil(min(x0, x1) - band - 0.5) + iax)
        cc1 = min(col1, math.floor(max(x0, x1) + band - 0.5) + iax)
        rr0 = max(row0, math.ceil(min(y0, y1) - band - 0.5) + iay)
        rr1 = min(row1, math.floor(max(y0, y1) + band - 0.5) + iay)
        if cc0 > cc1 or rr0 > rr1:
            continue
        qx = (np.arange(cc0, cc1 + 1) - iax) + 0.5
        qy = ((np.arange(rr0, rr1 + 1) - iay) + 0.5)[:, None]
        ex = x1 - x0
        ey = y1 - y0
        ll = ex * ex + ey * ey
        dx = qx - x0
        dy = qy - y0
        if ll > 0.0:
            u = (dx * ex + dy * ey) / ll
            np.clip(u, 0.0, 1.0, out=u)
        else:
            u = np.zeros((rr1 - rr0 + 1, cc1 - cc0 + 1), dtype=np.float64)
        rx = dx - u * ex
        ry = dy - u * ey
        d = np.sqrt(rx * rx + ry * ry)
        sl = (slice(rr0 - row0, rr1 - row0 + 1), slice(cc0 - col0, cc1 - col0 + 1))
        closer = d < dbuf[sl]
        dbuf[sl] = np.where(closer, d, dbuf[sl])
        cbuf[sl] = np.where(closer, np.int32(c), cbuf[sl])
        ubuf[sl] = np.where(closer, u, ubuf[sl])

    rows, cols = np.nonzero(dbuf < band)
    pix = (rows + row0).astype(np.int64) * width + (cols + col0)
    return pix, dbuf[rows, cols], cbuf[rows, cols], ubuf[rows, cols]
