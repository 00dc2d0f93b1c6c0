"""Pure numpy implementations of the compiled kernels in ``_kernels.pyx``.

Same signatures and tie-breaking rules; used when the extension is not built
or when ``HOMOFLOW_KERNELS=python``.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _bilinear(img, x, y):
    h, w = img.shape
    x0 = np.clip(np.floor(x).astype(np.int64), 0, w - 2)
    y0 = np.clip(np.floor(y).astype(np.int64), 0, h - 2)
    fx = x - x0
    fy = y - y0
    return ((1.0 - fy) * ((1.0 - fx) * img[y0, x0] + fx * img[y0, x0 + 1])
            + fy * ((1.0 - fx) * img[y0 + 1, x0] + fx * img[y0 + 1, x0 + 1]))


def warp_bilinear(src, hinv, out_h, out_w, fill=0.0):
    src = np.ascontiguousarray(src, dtype=np.float64)
    h, w = src.shape
    jj, ii = np.meshgrid(np.arange(out_w, dtype=np.float64), np.arange(out_h, dtype=np.float64))
    sw = hinv[2, 0] * jj + hinv[2, 1] * ii + hinv[2, 2]
    bad = np.abs(sw) < 1e-12
    sw = np.where(bad, 1.0, sw)
    sx = (hinv[0, 0] * jj + hinv[0, 1] * ii + hinv[0, 2]) / sw
    sy = (hinv[1, 0] * jj + hinv[1, 1] * ii + hinv[1, 2]) / sw
    tol = 1e-9
    inside = ~bad & (sx >= -tol) & (sy >= -tol) & (sx <= w - 1 + tol) & (sy <= h - 1 + tol)
    out = np.full((out_h, out_w), float(fill))
    out[inside] = _bilinear(src, np.clip(sx[inside], 0.0, w - 1.0), np.clip(sy[inside], 0.0, h - 1.0))
    return out


def zncc_search(a, b, pts, half, radius):
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    pts = np.asarray(pts, dtype=np.int64).reshape(-1, 2)
    npts = len(pts)
    offsets = np.zeros((npts, 2), dtype=np.int64)
    scores = np.full(npts, -2.0)
    side = 2 * half + 1
    n = float(side * side)
    ha, wa = a.shape
    hb, wb = b.shape
    px, py = pts[:, 0], pts[:, 1]
    ok = (px - half >= 0) & (py - half >= 0) & (px + half < wa) & (py + half < ha)
    win_a = sliding_window_view(a, (side, side))
    win_b = sliding_window_view(b, (side, side))
    idx = np.nonzero(ok)[0]
    if len(idx) == 0:
        return offsets, scores
    tpl = win_a[py[idx] - half, px[idx] - half].reshape(len(idx), -1)
    tpl = tpl - tpl.mean(axis=1, keepdims=True)
    tnorm = np.sqrt((tpl * tpl).sum(axis=1))
    textured = tnorm * tnorm >= 1e-12
    idx, tpl, tnorm = idx[textured], tpl[textured], tnorm[textured]
    best = np.full(len(idx), -2.0)
    bdx = np.zeros(len(idx), dtype=np.int64)
    bdy = np.zeros(len(idx), dtype=np.int64)
    # scan order matches the compiled loop: dy outer, dx inner, strict improvement
    for dy in range(-radius, radius + 1):
        qy = py[idx] + dy
        ok_y = (qy - half >= 0) & (qy + half < hb)
        for dx in range(-radius, radius + 1):
            qx = px[idx] + dx
            sel = ok_y & (qx - half >= 0) & (qx + half < wb)
            if not sel.any():
                continue
            wins = win_b[qy[sel] - half, qx[sel] - half].reshape(int(sel.sum()), -1)
            sb = wins.sum(axis=1)
            sbb = (wins * wins).sum(axis=1)
            stb = (tpl[sel] * wins).sum(axis=1)
            var = sbb - sb * sb / n
            good = var >= 1e-12
            score = np.full(len(sb), -np.inf)
            score[good] = stb[good] / (tnorm[sel][good] * np.sqrt(var[good]))
            cur = best[sel]
            better = score > cur
            pos = np.nonzero(sel)[0][better]
            best[pos] = score[better]
            bdx[pos] = dx
            bdy[pos] = dy
    scores[idx] = best
    offsets[idx, 0] = bdx
    offsets[idx, 1] = bdy
    return offsets, scores


def lk_refine(a, b, pts, offsets, half, iters):
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    pts = np.asarray(pts, dtype=np.int64).reshape(-1, 2)
    offsets = np.array(offsets, dtype=np.float64).reshape(-1, 2)
    npts = len(pts)
    valid = np.ones(npts, dtype=bool)
    active = np.ones(npts, dtype=bool)
    hb, wb = b.shape
    side = 2 * half + 1
    gi, gj = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
    gi = gi.ravel()
    gj = gj.ravel()
    for _ in range(iters):
        k = np.nonzero(active)[0]
        if len(k) == 0:
            break
        px = pts[k, 0].astype(np.float64)
        py = pts[k, 1].astype(np.float64)
        ox, oy = offsets[k, 0], offsets[k, 1]
        inb = ((px + ox - half >= 1.0) & (py + oy - half >= 1.0)
               & (px + ox + half <= wb - 2) & (py + oy + half <= hb - 2))
        valid[k[~inb]] = False
        active[k[~inb]] = False
        k, px, py, ox, oy = k[inb], px[inb], py[inb], ox[inb], oy[inb]
        if len(k) == 0:
            break
        t = a[pts[k, 1][:, None] - half + gi, pts[k, 0][:, None] - half + gj]
        x = (px + ox - half)[:, None] + gj
        y = (py + oy - half)[:, None] + gi
        bv = _bilinear(b, x, y)
        gx = 0.5 * (_bilinear(b, x + 1.0, y) - _bilinear(b, x - 1.0, y))
        gy = 0.5 * (_bilinear(b, x, y + 1.0) - _bilinear(b, x, y - 1.0))
        feats = np.stack([bv, np.ones_like(bv), gx, gy], axis=2)
        m = np.einsum("kni,knj->kij", feats, feats)
        rhs = np.einsum("kni,kn->ki", feats, t)
        ok = np.abs(np.linalg.det(m)) > 1e-30
        sol = np.zeros((len(k), 4))
        if ok.any():
            sol[ok] = np.linalg.solve(m[ok], rhs[ok][..., None])[..., 0]
        ok &= sol[:, 0] > 1e-6
        ddx = np.where(ok, sol[:, 2] / np.where(ok, sol[:, 0], 1.0), 0.0)
        ddy = np.where(ok, sol[:, 3] / np.where(ok, sol[:, 0], 1.0), 0.0)
        ok &= (np.abs(ddx) <= 2.0) & (np.abs(ddy) <= 2.0)
        valid[k[~ok]] = False
        active[k[~ok]] = False
        k, ddx, ddy = k[ok], ddx[ok], ddy[ok]
        offsets[k, 0] += ddx
        offsets[k, 1] += ddy
        done = (np.abs(ddx) < 1e-4) & (np.abs(ddy) < 1e-4)
        active[k[done]] = False
    return offsets, valid


def _solve_batch(src_n, dst_n, samples):
    k = len(samples)
    x = src_n[samples, 0]
    y = src_n[samples, 1]
    u = dst_n[samples, 0]
    v = dst_n[samples, 1]
    m = np.zeros((k, 8, 8))
    rhs = np.zeros((k, 8))
    z = np.zeros_like(x)
    o = np.ones_like(x)
    m[:, 0::2] = np.stack([x, y, o, z, z, z, -u * x, -u * y], axis=2)
    m[:, 1::2] = np.stack([z, z, z, x, y, o, -v * x, -v * y], axis=2)
    rhs[:, 0::2] = u
    rhs[:, 1::2] = v
    ok = np.abs(np.linalg.det(m)) > 1e-12
    h = np.zeros((k, 9))
    if ok.any():
        h[ok, :8] = np.linalg.solve(m[ok], rhs[ok][..., None])[..., 0]
    h[:, 8] = 1.0
    return h.reshape(k, 3, 3), ok


def sym_errors(hs, his, src, dst):
    """Symmetric transfer errors for a batch of homographies, shape ``(k, n)``."""
    def proj(g, p):
        w = g[:, 2, 0, None] * p[:, 0] + g[:, 2, 1, None] * p[:, 1] + g[:, 2, 2, None]
        bad = np.abs(w) < 1e-12
        w = np.where(bad, 1.0, w)
        x = (g[:, 0, 0, None] * p[:, 0] + g[:, 0, 1, None] * p[:, 1] + g[:, 0, 2, None]) / w
        y = (g[:, 1, 0, None] * p[:, 0] + g[:, 1, 1, None] * p[:, 1] + g[:, 1, 2, None]) / w
        return x, y, bad

    fx, fy, b1 = proj(hs, src)
    bx, by, b2 = proj(his, dst)
    e = 0.5 * (np.hypot(fx - dst[:, 0], fy - dst[:, 1]) + np.hypot(bx - src[:, 0], by - src[:, 1]))
    e[b1 | b2] = 1e30
    return e


def ransac_best(src_n, dst_n, t1, t2inv, src, dst, samples, thresh, chunk=256):
    samples = np.asarray(samples, dtype=np.int64)
    best_h, best_count, best_mean = None, -1, 1e30
    for start in range(0, len(samples), chunk):
        hn, ok = _solve_batch(src_n, dst_n, samples[start:start + chunk])
        hs = t2inv @ hn @ t1
        ok &= np.abs(hs[:, 2, 2]) >= 1e-12
        hs = hs / np.where(ok, hs[:, 2, 2], 1.0)[:, None, None]
        ok &= np.abs(np.linalg.det(hs)) >= 1e-12
        idx = np.nonzero(ok)[0]
        if len(idx) == 0:
            continue
        hs = hs[idx]
        his = np.linalg.inv(hs)
        e = sym_errors(hs, his, src, dst)
        inl = e < thresh
        counts = inl.sum(axis=1)
        tot = np.where(inl, e, 0.0).sum(axis=1)
        for j in range(len(idx)):
            c = int(counts[j])
            if c == 0:
                continue
            mean = tot[j] / c
            if c > best_count or (c == best_count and mean < best_mean):
                best_count, best_mean, best_h = c, mean, hs[j].copy()
    if best_count < 0:
        return None, 0, float("inf")
    return best_h, best_count, best_mean
