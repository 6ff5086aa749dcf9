"""Compiled inner loops: pairwise segment hits and the birth-death-move chain.

The scalar intersection predicate mirrors :func:`segproc.geometry.segments_intersect`
exactly (same orientation tolerance) so both paths agree on every input.
"""

import math

import numpy as np
from numba import njit

EPS = 1e-12


@njit(cache=True, inline="always")
def _orient(ax, ay, bx, by, cx, cy):
    v = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
    if abs(v) <= EPS:
        return 0
    return 1 if v > 0 else -1


@njit(cache=True, inline="always")
def _on_box(px, py, ax, ay, bx, by):
    return (
        min(ax, bx) - EPS <= px <= max(ax, bx) + EPS
        and min(ay, by) - EPS <= py <= max(ay, by) + EPS
    )


@njit(cache=True)
def seg_hit(cx1, cy1, r1, phi1, cx2, cy2, r2, phi2):
    dx = cx1 - cx2
    dy = cy1 - cy2
    reach = 0.5 * (r1 + r2) + 1e-9
    if dx * dx + dy * dy > reach * reach:
        return False
    return seg_hit_half(
        cx1, cy1, 0.5 * r1 * math.cos(phi1), 0.5 * r1 * math.sin(phi1),
        cx2, cy2, 0.5 * r2 * math.cos(phi2), 0.5 * r2 * math.sin(phi2),
    )


@njit(cache=True, inline="always")
def seg_hit_half(cx1, cy1, hx1, hy1, cx2, cy2, hx2, hy2):
    """Intersection test on centres and half-vectors (endpoints = centre -/+ half)."""
    p1x, p1y, p2x, p2y = cx1 - hx1, cy1 - hy1, cx1 + hx1, cy1 + hy1
    q1x, q1y, q2x, q2y = cx2 - hx2, cy2 - hy2, cx2 + hx2, cy2 + hy2
    o1 = _orient(p1x, p1y, p2x, p2y, q1x, q1y)
    o2 = _orient(p1x, p1y, p2x, p2y, q2x, q2y)
    o3 = _orient(q1x, q1y, q2x, q2y, p1x, p1y)
    o4 = _orient(q1x, q1y, q2x, q2y, p2x, p2y)
    if o1 != o2 and o3 != o4:
        return True
    if o1 == 0 and _on_box(q1x, q1y, p1x, p1y, p2x, p2y):
        return True
    if o2 == 0 and _on_box(q2x, q2y, p1x, p1y, p2x, p2y):
        return True
    if o3 == 0 and _on_box(p1x, p1y, q1x, q1y, q2x, q2y):
        return True
    if o4 == 0 and _on_box(p2x, p2y, q1x, q1y, q2x, q2y):
        return True
    return False


@njit(cache=True)
def hits_against(cx, cy, r, phi, xs, ys, rs, phis, n, skip):
    """Hits of one segment against the first ``n`` entries, ignoring index ``skip``."""
    k = 0
    for j in range(n):
        if j != skip and seg_hit(cx, cy, r, phi, xs[j], ys[j], rs[j], phis[j]):
            k += 1
    return k


@njit(cache=True)
def _halves(r, phi):
    hx = 0.5 * r * np.cos(phi)
    hy = 0.5 * r * np.sin(phi)
    return hx, hy


@njit(cache=True, inline="always")
def _near(cx1, cy1, r1, cx2, cy2, r2):
    dx = cx1 - cx2
    dy = cy1 - cy2
    reach = 0.5 * (r1 + r2) + 1e-9
    return dx * dx + dy * dy <= reach * reach


@njit(cache=True)
def hit_counts(tcx, tcy, tr, tphi, cx, cy, r, phi):
    out = np.zeros(tcx.size, dtype=np.int64)
    if cx.size == 0:
        return out
    # scan only entries whose centre abscissa is within reach
    order = np.argsort(cx)
    sx, sy, sr, sp = cx[order], cy[order], r[order], phi[order]
    hx, hy = _halves(sr, sp)
    thx, thy = _halves(tr, tphi)
    half_max = 0.5 * sr.max() + 1e-9
    for i in range(tcx.size):
        span = 0.5 * tr[i] + half_max
        lo = np.searchsorted(sx, tcx[i] - span, side="left")
        hi = np.searchsorted(sx, tcx[i] + span, side="right")
        k = 0
        for j in range(lo, hi):
            if not _near(tcx[i], tcy[i], tr[i], sx[j], sy[j], sr[j]):
                continue
            same = tcx[i] == sx[j] and tcy[i] == sy[j] and tr[i] == sr[j] and tphi[i] == sp[j]
            if not same and seg_hit_half(tcx[i], tcy[i], thx[i], thy[i], sx[j], sy[j], hx[j], hy[j]):
                k += 1
        out[i] = k
    return out


@njit(cache=True)
def total_intersections(cx, cy, r, phi):
    hx, hy = _halves(r, phi)
    k = 0
    for i in range(cx.size):
        for j in range(i + 1, cx.size):
            if _near(cx[i], cy[i], r[i], cx[j], cy[j], r[j]) and seg_hit_half(
                cx[i], cy[i], hx[i], hy[i], cx[j], cy[j], hx[j], hy[j]
            ):
                k += 1
    return k


@njit(cache=True, inline="always")
def _table_lookup(table, phi):
    # periodic linear interpolation on k*pi/T, k = 0..T-1
    t = table.size
    pos = (phi / math.pi) * t
    i0 = int(math.floor(pos))
    w = pos - i0
    i0 = i0 % t
    i1 = (i0 + 1) % t
    return (1.0 - w) * table[i0] + w * table[i1]


@njit(cache=True, inline="always")
def _cell(x, y, x0, y0, cw, ch, nx, ny):
    ix = min(max(int((x - x0) / cw), 0), nx - 1)
    iy = min(max(int((y - y0) / ch), 0), ny - 1)
    return iy * nx + ix


@njit(cache=True, inline="always")
def _link(i, c, head, nxt, prv, cell_of):
    nxt[i] = head[c]
    prv[i] = -1
    if head[c] != -1:
        prv[head[c]] = i
    head[c] = i
    cell_of[i] = c


@njit(cache=True, inline="always")
def _unlink(i, head, nxt, prv, cell_of):
    c = cell_of[i]
    if prv[i] != -1:
        nxt[prv[i]] = nxt[i]
    else:
        head[c] = nxt[i]
    if nxt[i] != -1:
        prv[nxt[i]] = prv[i]


@njit(cache=True)
def _hits_near(px, py, pphi, length, xs, ys, hxs, hys, skip, head, nxt, x0, y0, cw, ch, nx, ny):
    ix = min(max(int((px - x0) / cw), 0), nx - 1)
    iy = min(max(int((py - y0) / ch), 0), ny - 1)
    hx = 0.5 * length * math.cos(pphi)
    hy = 0.5 * length * math.sin(pphi)
    reach2 = (length + 1e-9) ** 2
    k = 0
    for jy in range(max(iy - 1, 0), min(iy + 2, ny)):
        for jx in range(max(ix - 1, 0), min(ix + 2, nx)):
            j = head[jy * nx + jx]
            while j != -1:
                dx = px - xs[j]
                dy = py - ys[j]
                if j != skip and dx * dx + dy * dy <= reach2:
                    if seg_hit_half(px, py, hx, hy, xs[j], ys[j], hxs[j], hys[j]):
                        k += 1
                j = nxt[j]
    return k


@njit(cache=True)
def gibbs_chain(
    cx0, cy0, phi0, length, x0, y0, width, height, tau, a, g_table,
    kinds, accept_u, u1, u2, u3, z1, z2, z3,
    p_birth, p_death, move_sd, angle_sd, trace_every,
):
    """Birth-death-move Metropolis-Hastings for exp(a N(x)) tau^n prod g.

    Conditional intensity is taken w.r.t. Lebesgue measure on window x [0, pi),
    so births are proposed uniformly with volume ``pi * |B|``.  Neighbours are
    found through a cell list with cells no smaller than the segment length.
    Returns the final state, per-move-type proposal/acceptance counts and
    traces of n(x) and N(x).
    """
    vol = math.pi * width * height
    nx = max(1, int(width / length))
    ny = max(1, int(height / length))
    cw = width / nx
    ch = height / ny
    head = np.full(nx * ny, -1, dtype=np.int64)

    n = cx0.size
    cap = max(16, 2 * n + 16)
    xs = np.empty(cap)
    ys = np.empty(cap)
    ps = np.empty(cap)
    hxs = np.empty(cap)
    hys = np.empty(cap)
    nxt = np.empty(cap, dtype=np.int64)
    prv = np.empty(cap, dtype=np.int64)
    cell_of = np.empty(cap, dtype=np.int64)
    xs[:n] = cx0
    ys[:n] = cy0
    ps[:n] = phi0
    for i in range(n):
        hxs[i] = 0.5 * length * math.cos(ps[i])
        hys[i] = 0.5 * length * math.sin(ps[i])
    big_n = 0
    for i in range(n):
        big_n += _hits_near(xs[i], ys[i], ps[i], length, xs, ys, hxs, hys, i, head, nxt, x0, y0, cw, ch, nx, ny)
        _link(i, _cell(xs[i], ys[i], x0, y0, cw, ch, nx, ny), head, nxt, prv, cell_of)

    n_iter = kinds.size
    proposed = np.zeros(3, dtype=np.int64)
    accepted = np.zeros(3, dtype=np.int64)
    n_trace = n_iter // trace_every
    trace_n = np.zeros(n_trace, dtype=np.int64)
    trace_big = np.zeros(n_trace, dtype=np.int64)

    for it in range(n_iter):
        kind = kinds[it]
        if kind < p_birth:
            proposed[0] += 1
            bx = x0 + width * u1[it]
            by = y0 + height * u2[it]
            bp = math.pi * u3[it]
            k = _hits_near(bx, by, bp, length, xs, ys, hxs, hys, -1, head, nxt, x0, y0, cw, ch, nx, ny)
            lam = tau * _table_lookup(g_table, bp) * math.exp(a * k)
            if accept_u[it] * (n + 1) * p_birth < lam * vol * p_death:
                if n == cap:
                    cap *= 2
                    xs = _grow(xs, cap)
                    ys = _grow(ys, cap)
                    ps = _grow(ps, cap)
                    hxs = _grow(hxs, cap)
                    hys = _grow(hys, cap)
                    nxt = _grow_int(nxt, cap)
                    prv = _grow_int(prv, cap)
                    cell_of = _grow_int(cell_of, cap)
                xs[n] = bx
                ys[n] = by
                ps[n] = bp
                hxs[n] = 0.5 * length * math.cos(bp)
                hys[n] = 0.5 * length * math.sin(bp)
                _link(n, _cell(bx, by, x0, y0, cw, ch, nx, ny), head, nxt, prv, cell_of)
                n += 1
                big_n += k
                accepted[0] += 1
        elif kind < p_birth + p_death:
            proposed[1] += 1
            if n > 0:
                idx = min(int(u1[it] * n), n - 1)
                k = _hits_near(xs[idx], ys[idx], ps[idx], length, xs, ys, hxs, hys, idx, head, nxt, x0, y0, cw, ch, nx, ny)
                lam = tau * _table_lookup(g_table, ps[idx]) * math.exp(a * k)
                if lam <= 0.0 or accept_u[it] * vol * lam * p_death < n * p_birth:
                    last = n - 1
                    _unlink(idx, head, nxt, prv, cell_of)
                    if idx != last:
                        _unlink(last, head, nxt, prv, cell_of)
                        xs[idx] = xs[last]
                        ys[idx] = ys[last]
                        ps[idx] = ps[last]
                        hxs[idx] = hxs[last]
                        hys[idx] = hys[last]
                        _link(idx, _cell(xs[idx], ys[idx], x0, y0, cw, ch, nx, ny), head, nxt, prv, cell_of)
                    n -= 1
                    big_n -= k
                    accepted[1] += 1
        else:
            proposed[2] += 1
            if n > 0:
                idx = min(int(u1[it] * n), n - 1)
                mx = xs[idx] + move_sd * z1[it]
                my = ys[idx] + move_sd * z2[it]
                if x0 <= mx <= x0 + width and y0 <= my <= y0 + height:
                    mp = (ps[idx] + angle_sd * z3[it]) % math.pi
                    k_old = _hits_near(xs[idx], ys[idx], ps[idx], length, xs, ys, hxs, hys, idx, head, nxt, x0, y0, cw, ch, nx, ny)
                    k_new = _hits_near(mx, my, mp, length, xs, ys, hxs, hys, idx, head, nxt, x0, y0, cw, ch, nx, ny)
                    g_old = _table_lookup(g_table, ps[idx])
                    g_new = _table_lookup(g_table, mp)
                    new = g_new * math.exp(a * (k_new - k_old))
                    if g_old <= 0.0 or accept_u[it] * g_old < new:
                        _unlink(idx, head, nxt, prv, cell_of)
                        xs[idx] = mx
                        ys[idx] = my
                        ps[idx] = mp
                        hxs[idx] = 0.5 * length * math.cos(mp)
                        hys[idx] = 0.5 * length * math.sin(mp)
                        _link(idx, _cell(mx, my, x0, y0, cw, ch, nx, ny), head, nxt, prv, cell_of)
                        big_n += k_new - k_old
                        accepted[2] += 1
        if (it + 1) % trace_every == 0:
            t = (it + 1) // trace_every - 1
            trace_n[t] = n
            trace_big[t] = big_n
    return xs[:n].copy(), ys[:n].copy(), ps[:n].copy(), proposed, accepted, trace_n, trace_big


@njit(cache=True)
def _grow(arr, cap):
    out = np.empty(cap)
    out[: arr.size] = arr
    return out


@njit(cache=True)
def _grow_int(arr, cap):
    out = np.empty(cap, dtype=np.int64)
    out[: arr.size] = arr
    return out
