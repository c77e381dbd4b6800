# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled segment/grid kernels; see ``_geom_py`` for the reference version."""

from libc.math cimport floor, fabs, INFINITY


cdef inline int _contact(const unsigned char[:, :] blocked, double x0, double y0,
                         double x1, double y1, double cell,
                         double* t_out, int* r_out, int* c_out) noexcept nogil:
    cdef Py_ssize_t nrows = blocked.shape[0]
    cdef Py_ssize_t ncols = blocked.shape[1]
    cdef double gx0 = x0 / cell
    cdef double gy0 = y0 / cell
    cdef double gx1 = x1 / cell
    cdef double gy1 = y1 / cell
    cdef long c = <long>floor(gx0)
    cdef long r = <long>floor(gy0)
    cdef long ce = <long>floor(gx1)
    cdef long re = <long>floor(gy1)
    cdef double dx, dy, tdx, tdy, tmx, tmy, t = 0.0
    cdef long sx, sy, limit, it
    t_out[0] = -1.0
    r_out[0] = -1
    c_out[0] = -1
    if c == ce and r == re:
        return 0
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
        tdx = INFINITY
        tmx = INFINITY
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
        tdy = INFINITY
        tmy = INFINITY
    limit = (ce - c if ce >= c else c - ce) + (re - r if re >= r else r - re) + 2
    for it in range(limit):
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
        if r < 0 or r >= nrows or c < 0 or c >= ncols or blocked[r, c]:
            t_out[0] = t
            r_out[0] = <int>r
            c_out[0] = <int>c
            return 1
        if c == ce and r == re:
            break
    return 0


def segment_contact(const unsigned char[:, :] blocked, double x0, double y0,
                    double x1, double y1, double cell):
    cdef double t
    cdef int r, c
    _contact(blocked, x0, y0, x1, y1, cell, &t, &r, &c)
    return t, r, c


def first_violation(const unsigned char[:, :] blocked, const double[:, :] xy, double cell):
    cdef Py_ssize_t nrows = blocked.shape[0]
    cdef Py_ssize_t ncols = blocked.shape[1]
    cdef Py_ssize_t n = xy.shape[0]
    cdef Py_ssize_t j
    cdef long r, c
    cdef double t
    cdef int hr, hc
    for j in range(n):
        c = <long>floor(xy[j, 0] / cell)
        r = <long>floor(xy[j, 1] / cell)
        if r < 0 or r >= nrows or c < 0 or c >= ncols or blocked[r, c]:
            return j - 1 if j > 0 else 0
        if j + 1 < n:
            if _contact(blocked, xy[j, 0], xy[j, 1], xy[j + 1, 0], xy[j + 1, 1], cell, &t, &hr, &hc):
                return j
    return -1
