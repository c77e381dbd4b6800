"""Pure-Python segment/grid kernels.

Arithmetic mirrors ``_geom_ext.pyx`` operation for operation so both
backends return bit-identical results.
"""

import math

INF = float("inf")


def segment_contact(blocked, x0, y0, x1, y1, cell):
    """First blocked cell entered by the segment (x0, y0) -> (x1, y1).

    Returns ``(t, row, col)`` with ``t`` the segment parameter in [0, 1] at
    which the blocked cell is entered, or ``(-1.0, -1, -1)`` when the segment
    stays in free space. The starting cell is never reported. Leaving the
    grid counts as a hit.
    """
    nrows = blocked.shape[0]
    ncols = blocked.shape[1]
    gx0 = x0 / cell
    gy0 = y0 / cell
    gx1 = x1 / cell
    gy1 = y1 / cell
    c = int(math.floor(gx0))
    r = int(math.floor(gy0))
    ce = int(math.floor(gx1))
    re = int(math.floor(gy1))
    if c == ce and r == re:
        return -1.0, -1, -1
    dx = gx1 - gx0
    dy = gy1 - gy0
    if dx > 0.0:
        sx = 1
        tdx = 1.0 / dx
        tmx = ((c + 1) - gx0) / dx
    elif dx < 0.0:
        sx = -1
        tdx = -1.0 / dx
        tmx = (gx0 - c) / (-dx)
    else:
        sx = 0
        tdx = INF
        tmx = INF
    if dy > 0.0:
        sy = 1
        tdy = 1.0 / dy
        tmy = ((r + 1) - gy0) / dy
    elif dy < 0.0:
        sy = -1
        tdy = -1.0 / dy
        tmy = (gy0 - r) / (-dy)
    else:
        sy = 0
        tdy = INF
        tmy = INF
    limit = abs(ce - c) + abs(re - r) + 2
    for _ in range(limit):
        if tmx <= tmy:
            if tmx > 1.0:
                break
            t = tmx
            c += sx
            tmx += tdx
        else:
            if tmy > 1.0:
                break
            t = tmy
            r += sy
            tmy += tdy
        if r < 0 or r >= nrows or c < 0 or c >= ncols:
            return t, r, c
        if blocked[r, c]:
            return t, r, c
        if c == ce and r == re:
            break
    return -1.0, -1, -1


def first_violation(blocked, xy, cell):
    """Index of the first segment of polyline ``xy`` (n x 2) touching a blocked cell, else -1."""
    nrows = blocked.shape[0]
    ncols = blocked.shape[1]
    n = xy.shape[0]
    for j in range(n):
        c = int(math.floor(xy[j, 0] / cell))
        r = int(math.floor(xy[j, 1] / cell))
        if r < 0 or r >= nrows or c < 0 or c >= ncols or blocked[r, c]:
            return j - 1 if j > 0 else 0
        if j + 1 < n:
            t, _, _ = segment_contact(blocked, xy[j, 0], xy[j, 1], xy[j + 1, 0], xy[j + 1, 1], cell)
            if t >= 0.0:
                return j
    return -1
