# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. ``_kernels_py`` holds the numpy equivalents."""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor, sqrt, fabs, fmin, fmax

cnp.import_array()


cdef inline double _bilinear(const double[:, ::1] img, double x, double y) noexcept nogil:
    cdef Py_ssize_t h = img.shape[0], w = img.shape[1]
    cdef Py_ssize_t x0 = <Py_ssize_t>floor(x)
    cdef Py_ssize_t y0 = <Py_ssize_t>floor(y)
    cdef Py_ssize_t x1, y1
    cdef double fx, fy
    if x0 >= w - 1:
        x0 = w - 2
    if y0 >= h - 1:
        y0 = h - 2
    if x0 < 0:
        x0 = 0
    if y0 < 0:
        y0 = 0
    x1 = x0 + 1
    y1 = y0 + 1
    fx = x - x0
    fy = y - y0
    return ((1.0 - fy) * ((1.0 - fx) * img[y0, x0] + fx * img[y0, x1])
            + fy * ((1.0 - fx) * img[y1, x0] + fx * img[y1, x1]))


def warp_bilinear(const double[:, ::1] src, const double[:, ::1] hinv,
                  Py_ssize_t out_h, Py_ssize_t out_w, double fill=0.0):
    out_arr = np.empty((out_h, out_w), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t h = src.shape[0], w = src.shape[1]
    cdef Py_ssize_t i, j
    cdef double sx, sy, sw
    cdef double a00 = hinv[0, 0], a01 = hinv[0, 1], a02 = hinv[0, 2]
    cdef double a10 = hinv[1, 0], a11 = hinv[1, 1], a12 = hinv[1, 2]
    cdef double a20 = hinv[2, 0], a21 = hinv[2, 1], a22 = hinv[2, 2]
    with nogil:
        for i in range(out_h):
            for j in range(out_w):
                sw = a20 * j + a21 * i + a22
                if fabs(sw) < 1e-12:
                    out[i, j] = fill
                    continue
                sx = (a00 * j + a01 * i + a02) / sw
                sy = (a10 * j + a11 * i + a12) / sw
                # tolerance absorbs round-off from inverting near-identity maps
                if sx < -1e-9 or sy < -1e-9 or sx > w - 1 + 1e-9 or sy > h - 1 + 1e-9:
                    out[i, j] = fill
                else:
                    sx = fmin(fmax(sx, 0.0), w - 1.0)
                    sy = fmin(fmax(sy, 0.0), h - 1.0)
                    out[i, j] = _bilinear(src, sx, sy)
    return out_arr


def zncc_search(const double[:, ::1] a, const double[:, ::1] b,
                const long[:, ::1] pts, int half, int radius):
    cdef Py_ssize_t npts = pts.shape[0]
    offsets_arr = np.zeros((npts, 2), dtype=np.int64)
    scores_arr = np.full(npts, -2.0)
    cdef long[:, ::1] offsets = offsets_arr
    cdef double[::1] scores = scores_arr
    cdef Py_ssize_t ha = a.shape[0], wa = a.shape[1]
    cdef Py_ssize_t hb = b.shape[0], wb = b.shape[1]
    cdef Py_ssize_t k, i, j, dx, dy, px, py, qx, qy
    cdef int side = 2 * half + 1
    cdef double n = side * side
    cdef double tmean, tnorm, sb, sbb, stb, var, score, best, v
    cdef double[:, ::1] tpl = np.empty((side, side))
    cdef int bdx, bdy
    with nogil:
        for k in range(npts):
            px = pts[k, 0]
            py = pts[k, 1]
            if px - half < 0 or py - half < 0 or px + half >= wa or py + half >= ha:
                continue
            tmean = 0.0
            for i in range(side):
                for j in range(side):
                    tmean = tmean + a[py - half + i, px - half + j]
            tmean = tmean / n
            tnorm = 0.0
            for i in range(side):
                for j in range(side):
                    v = a[py - half + i, px - half + j] - tmean
                    tpl[i, j] = v
                    tnorm = tnorm + v * v
            if tnorm < 1e-12:
                continue
            tnorm = sqrt(tnorm)
            best = -2.0
            bdx = 0
            bdy = 0
            for dy in range(-radius, radius + 1):
                qy = py + dy
                if qy - half < 0 or qy + half >= hb:
                    continue
                for dx in range(-radius, radius + 1):
                    qx = px + dx
                    if qx - half < 0 or qx + half >= wb:
                        continue
                    sb = 0.0
                    sbb = 0.0
                    stb = 0.0
                    for i in range(side):
                        for j in range(side):
                            v = b[qy - half + i, qx - half + j]
                            sb = sb + v
                            sbb = sbb + v * v
                            stb = stb + tpl[i, j] * v
                    var = sbb - sb * sb / n
                    if var < 1e-12:
                        continue
                    score = stb / (tnorm * sqrt(var))
                    if score > best:
                        best = score
                        bdx = dx
                        bdy = dy
            scores[k] = best
            offsets[k, 0] = bdx
            offsets[k, 1] = bdy
    return offsets_arr, scores_arr


cdef int _solve(double* m, double* rhs, int n, double* out) noexcept nogil:
    # Gaussian elimination with partial pivoting on an n x n row-major matrix.
    cdef int c, r, piv, k
    cdef double best, f, tmp
    for c in range(n):
        piv = c
        best = fabs(m[c * n + c])
        for r in range(c + 1, n):
            if fabs(m[r * n + c]) > best:
                best = fabs(m[r * n + c])
                piv = r
        if best < 1e-12:
            return 0
        if piv != c:
            for k in range(n):
                tmp = m[c * n + k]
                m[c * n + k] = m[piv * n + k]
                m[piv * n + k] = tmp
            tmp = rhs[c]
            rhs[c] = rhs[piv]
            rhs[piv] = tmp
        for r in range(c + 1, n):
            f = m[r * n + c] / m[c * n + c]
            if f != 0.0:
                for k in range(c, n):
                    m[r * n + k] = m[r * n + k] - f * m[c * n + k]
                rhs[r] = rhs[r] - f * rhs[c]
    for r in range(n - 1, -1, -1):
        tmp = rhs[r]
        for k in range(r + 1, n):
            tmp = tmp - m[r * n + k] * out[k]
        out[r] = tmp / m[r * n + r]
    return 1


def lk_refine(const double[:, ::1] a, const double[:, ::1] b,
              const long[:, ::1] pts, double[:, ::1] offsets, int half, int iters):
    """Refine integer offsets with gain/bias-invariant translational Lucas-Kanade."""
    cdef Py_ssize_t npts = pts.shape[0]
    valid_arr = np.ones(npts, dtype=np.uint8)
    cdef unsigned char[::1] valid = valid_arr
    cdef Py_ssize_t hb = b.shape[0], wb = b.shape[1]
    cdef Py_ssize_t k, i, j
    cdef int it, r, c, side = 2 * half + 1
    cdef double px, py, ox, oy, x, y, t, bv, gx, gy, ddx, ddy
    cdef double m[16]
    cdef double rhs[4]
    cdef double sol[4]
    cdef double f[4]
    with nogil:
        for k in range(npts):
            px = pts[k, 0]
            py = pts[k, 1]
            ox = offsets[k, 0]
            oy = offsets[k, 1]
            for it in range(iters):
                if (px + ox - half < 1.0 or py + oy - half < 1.0
                        or px + ox + half > wb - 2 or py + oy + half > hb - 2):
                    valid[k] = 0
                    break
                for r in range(16):
                    m[r] = 0.0
                for r in range(4):
                    rhs[r] = 0.0
                for i in range(side):
                    for j in range(side):
                        t = a[<Py_ssize_t>py - half + i, <Py_ssize_t>px - half + j]
                        x = px + ox - half + j
                        y = py + oy - half + i
                        bv = _bilinear(b, x, y)
                        gx = 0.5 * (_bilinear(b, x + 1.0, y) - _bilinear(b, x - 1.0, y))
                        gy = 0.5 * (_bilinear(b, x, y + 1.0) - _bilinear(b, x, y - 1.0))
                        f[0] = bv
                        f[1] = 1.0
                        f[2] = gx
                        f[3] = gy
                        for r in range(4):
                            rhs[r] = rhs[r] + f[r] * t
                            for c in range(4):
                                m[r * 4 + c] = m[r * 4 + c] + f[r] * f[c]
                if not _solve(m, rhs, 4, sol) or sol[0] <= 1e-6:
                    valid[k] = 0
                    break
                ddx = sol[2] / sol[0]
                ddy = sol[3] / sol[0]
                if fabs(ddx) > 2.0 or fabs(ddy) > 2.0:
                    valid[k] = 0
                    break
                ox = ox + ddx
                oy = oy + ddy
                if fabs(ddx) < 1e-4 and fabs(ddy) < 1e-4:
                    break
            offsets[k, 0] = ox
            offsets[k, 1] = oy
    return np.asarray(offsets), valid_arr.astype(bool)


cdef inline double _sym_err(double* hm, double* hi, double sx, double sy,
                            double dx, double dy) noexcept nogil:
    cdef double w, u, v, e1, e2
    w = hm[6] * sx + hm[7] * sy + hm[8]
    if fabs(w) < 1e-12:
        return 1e30
    u = (hm[0] * sx + hm[1] * sy + hm[2]) / w - dx
    v = (hm[3] * sx + hm[4] * sy + hm[5]) / w - dy
    e1 = sqrt(u * u + v * v)
    w = hi[6] * dx + hi[7] * dy + hi[8]
    if fabs(w) < 1e-12:
        return 1e30
    u = (hi[0] * dx + hi[1] * dy + hi[2]) / w - sx
    v = (hi[3] * dx + hi[4] * dy + hi[5]) / w - sy
    e2 = sqrt(u * u + v * v)
    return 0.5 * (e1 + e2)


def ransac_best(const double[:, ::1] src_n, const double[:, ::1] dst_n,
                const double[:, ::1] t1, const double[:, ::1] t2inv,
                const double[:, ::1] src, const double[:, ::1] dst,
                const long[:, ::1] samples, double thresh):
    """Score every 4-point hypothesis; return (H, inlier count, mean inlier error)."""
    cdef Py_ssize_t npts = src.shape[0], nsamp = samples.shape[0]
    cdef Py_ssize_t s, i, idx
    cdef int r, c, q, count, best_count = -1
    cdef double m[64]
    cdef double rhs[8]
    cdef double h[8]
    cdef double hn[9]
    cdef double tmp[9]
    cdef double hm[9]
    cdef double hi[9]
    cdef double best_h[9]
    cdef double x, y, u, v, det, err, tot, best_mean = 1e30
    with nogil:
        for s in range(nsamp):
            for q in range(4):
                idx = samples[s, q]
                x = src_n[idx, 0]
                y = src_n[idx, 1]
                u = dst_n[idx, 0]
                v = dst_n[idx, 1]
                r = 2 * q
                m[r * 8 + 0] = x
                m[r * 8 + 1] = y
                m[r * 8 + 2] = 1.0
                m[r * 8 + 3] = 0.0
                m[r * 8 + 4] = 0.0
                m[r * 8 + 5] = 0.0
                m[r * 8 + 6] = -u * x
                m[r * 8 + 7] = -u * y
                rhs[r] = u
                r = 2 * q + 1
                m[r * 8 + 0] = 0.0
                m[r * 8 + 1] = 0.0
                m[r * 8 + 2] = 0.0
                m[r * 8 + 3] = x
                m[r * 8 + 4] = y
                m[r * 8 + 5] = 1.0
                m[r * 8 + 6] = -v * x
                m[r * 8 + 7] = -v * y
                rhs[r] = v
            if not _solve(m, rhs, 8, h):
                continue
            for r in range(8):
                hn[r] = h[r]
            hn[8] = 1.0
            # hm = t2inv @ hn @ t1
            for r in range(3):
                for c in range(3):
                    tmp[r * 3 + c] = hn[r * 3 + 0] * t1[0, c] + hn[r * 3 + 1] * t1[1, c] + hn[r * 3 + 2] * t1[2, c]
            for r in range(3):
                for c in range(3):
                    hm[r * 3 + c] = t2inv[r, 0] * tmp[0 * 3 + c] + t2inv[r, 1] * tmp[1 * 3 + c] + t2inv[r, 2] * tmp[2 * 3 + c]
            if fabs(hm[8]) < 1e-12:
                continue
            for r in range(9):
                hm[r] = hm[r] / hm[8]
            det = (hm[0] * (hm[4] * hm[8] - hm[5] * hm[7])
                   - hm[1] * (hm[3] * hm[8] - hm[5] * hm[6])
                   + hm[2] * (hm[3] * hm[7] - hm[4] * hm[6]))
            if fabs(det) < 1e-12:
                continue
            hi[0] = (hm[4] * hm[8] - hm[5] * hm[7]) / det
            hi[1] = (hm[2] * hm[7] - hm[1] * hm[8]) / det
            hi[2] = (hm[1] * hm[5] - hm[2] * hm[4]) / det
            hi[3] = (hm[5] * hm[6] - hm[3] * hm[8]) / det
            hi[4] = (hm[0] * hm[8] - hm[2] * hm[6]) / det
            hi[5] = (hm[2] * hm[3] - hm[0] * hm[5]) / det
            hi[6] = (hm[3] * hm[7] - hm[4] * hm[6]) / det
            hi[7] = (hm[1] * hm[6] - hm[0] * hm[7]) / det
            hi[8] = (hm[0] * hm[4] - hm[1] * hm[3]) / det
            count = 0
            tot = 0.0
            for i in range(npts):
                err = _sym_err(hm, hi, src[i, 0], src[i, 1], dst[i, 0], dst[i, 1])
                if err < thresh:
                    count = count + 1
                    tot = tot + err
            if count == 0:
                continue
            if count > best_count or (count == best_count and tot / count < best_mean):
                best_count = count
                best_mean = tot / count
                for r in range(9):
                    best_h[r] = hm[r]
    if best_count < 0:
        return None, 0, float("inf")
    out = np.empty((3, 3))
    for r in range(9):
        out[r // 3, r % 3] = best_h[r]
    return out, best_count, best_mean
