"""Compiled inner loops shared by the scene, belief and planner modules.

Everything here works on plain arrays so it can be jitted. Grids are indexed
``[cy, cx]`` and world coordinates are meters, ``cell`` meters per grid node.
"""
import math

import numpy as np
from numba import njit

_TWO_PI = 2.0 * math.pi


@njit(cache=True)
def wrap_angle(a):
    """Wrap to (-pi, pi]; values already in range come back unchanged."""
    if -math.pi < a <= math.pi:
        return a
    return math.pi - ((math.pi - a) % _TWO_PI)


@njit(cache=True)
def segment_clear(obstacle, cell, x0, y0, x1, y1):
    """True if the segment (x0, y0)-(x1, y1) crosses no obstacle cell.

    Grid traversal after Amanatides & Woo. A segment passing exactly through a
    grid corner is blocked only when both cells flanking the corner are
    obstacles, which keeps the test mirror-symmetric.
    """
    h, w = obstacle.shape
    gx0 = x0 / cell
    gy0 = y0 / cell
    gx1 = x1 / cell
    gy1 = y1 / cell
    ix = int(math.floor(gx0))
    iy = int(math.floor(gy0))
    ex = int(math.floor(gx1))
    ey = int(math.floor(gy1))
    if ix < 0 or iy < 0 or ix >= w or iy >= h:
        return False
    if ex < 0 or ey < 0 or ex >= w or ey >= h:
        return False
    dx = gx1 - gx0
    dy = gy1 - gy0
    inf = np.inf
    if dx > 0:
        step_x = 1
        t_max_x = (ix + 1 - gx0) / dx
        t_dx = 1.0 / dx
    elif dx < 0:
        step_x = -1
        t_max_x = (ix - gx0) / dx
        t_dx = -1.0 / dx
    else:
        step_x = 0
        t_max_x = inf
        t_dx = inf
    if dy > 0:
        step_y = 1
        t_max_y = (iy + 1 - gy0) / dy
        t_dy = 1.0 / dy
    elif dy < 0:
        step_y = -1
        t_max_y = (iy - gy0) / dy
        t_dy = -1.0 / dy
    else:
        step_y = 0
        t_max_y = inf
        t_dy = inf
    guard = abs(ex - ix) + abs(ey - iy) + 2
    while guard > 0:
        guard -= 1
        if obstacle[iy, ix]:
            return False
        if ix == ex and iy == ey:
            return True
        if t_max_x > 1.0 and t_max_y > 1.0:
            # float round-off: the end cell is the next one along the segment
            return not obstacle[ey, ex]
        if t_max_x < t_max_y:
            ix += step_x
            t_max_x += t_dx
        elif t_max_y < t_max_x:
            iy += step_y
            t_max_y += t_dy
        else:
            nx = ix + step_x
            ny = iy + step_y
            if 0 <= nx < w and 0 <= ny < h:
                if obstacle[iy, nx] and obstacle[ny, ix]:
                    return False
            ix = nx
            iy = ny
            t_max_x += t_dx
            t_max_y += t_dy
        if ix < 0 or iy < 0 or ix >= w or iy >= h:
            return False
    return not obstacle[ey, ex]


@njit(cache=True)
def visibility_from(obstacle, cell, x, y, cxs, cys):
    out = np.empty(cxs.shape[0], dtype=np.bool_)
    for c in range(cxs.shape[0]):
        out[c] = segment_clear(obstacle, cell, x, y, cxs[c], cys[c])
    return out


@njit(cache=True)
def nondetection_one(x, y, phi, tx, ty, sigma, dmax, alpha, beta, pdmax, half_fov, amp):
    """Non-detection probability ignoring occlusion (caller handles it)."""
    dx = tx - x
    dy = ty - y
    # a target at the camera position counts as on-axis
    a = 0.0 if dx == 0.0 and dy == 0.0 else abs(wrap_angle(math.atan2(dy, dx) - phi))
    if a > half_fov:
        return 1.0
    dist_term = math.exp(-sigma / (dmax * dmax) * (dx * dx + dy * dy))
    ang_term = amp * math.exp(-((a / alpha) ** beta))
    q = 1.0 - pdmax * dist_term * ang_term
    if q < 0.0:
        return 0.0
    if q > 1.0:
        return 1.0
    return q


@njit(cache=True)
def headings(sx, sy, sphi, path):
    """Heading of arrival at each waypoint; a zero-length step keeps the heading."""
    n = path.shape[0]
    out = np.empty(n)
    px = sx
    py = sy
    ph = sphi
    for i in range(n):
        dx = path[i, 0] - px
        dy = path[i, 1] - py
        if dx * dx + dy * dy > 1e-18:
            ph = wrap_angle(math.atan2(dy, dx))
        out[i] = ph
        px = path[i, 0]
        py = path[i, 1]
    return out


@njit(cache=True)
def headings_batch(sx, sy, sphi, paths):
    out = np.empty(paths.shape[:2])
    for b in range(paths.shape[0]):
        out[b] = headings(sx, sy, sphi, paths[b])
    return out


@njit(cache=True)
def fill_visibility_block(obstacle, cell, sub, table, filled, ix, iy):
    """Line of sight from the ``sub`` x ``sub`` sample points of grid cell (ix, iy)
    to every cell center, cached in ``table`` (rows, cols, n_cells)."""
    h, w = obstacle.shape
    for a in range(sub):
        py = (iy + (a + 0.5) / sub) * cell
        for b in range(sub):
            px = (ix + (b + 0.5) / sub) * cell
            for c in range(h * w):
                tx = (c % w + 0.5) * cell
                ty = (c // w + 0.5) * cell
                table[iy * sub + a, ix * sub + b, c] = segment_clear(obstacle, cell, px, py, tx, ty)
    filled[iy, ix] = True


@njit(cache=True)
def visible_cached(obstacle, cell, sub, table, filled, x, y, c):
    h, w = obstacle.shape
    qx = int(math.floor(x / cell * sub))
    qy = int(math.floor(y / cell * sub))
    if qx < 0 or qy < 0 or qx >= w * sub or qy >= h * sub:
        return False
    ix = qx // sub
    iy = qy // sub
    if not filled[iy, ix]:
        fill_visibility_block(obstacle, cell, sub, table, filled, ix, iy)
    return table[qy, qx, c]


@njit(cache=True)
def utility_batch(paths, phis, cidx, cxs, cys, bel, obstacle, cell, table, filled, sub,
                  sigma, dmax, alpha, beta, pdmax, half_fov, amp, lam, vel, geo):
    """Expected detection utility for each trajectory in ``paths`` (B, N, 2).

    ``phis`` (B, N) are the waypoint headings. Computes
    1 - sum_c prod_i q(s_i, c) * H(s_N, c) * b(c), clamped to [0, 1].
    Same arithmetic as :func:`nondetection_one`, with a cheap dot-product
    field-of-view rejection in front of it. With ``sub`` > 0 occlusion is
    looked up from a visibility table sampled ``sub`` times per cell side;
    ``sub`` == 0 traces every ray exactly.

    ``geo`` is either empty (straight-line distance in H) or the
    cell-to-cell shortest path table; then cells hidden from the end point
    are reached through the best visible neighbor cell of the end point.
    """
    nb = paths.shape[0]
    n = paths.shape[1]
    nc = cxs.shape[0]
    out = np.empty(nb)
    cos_half = math.cos(half_fov)
    k_dist = sigma / (dmax * dmax)
    log_lam = math.log(lam) if lam > 0.0 else -np.inf
    hx = np.empty(n)
    hy = np.empty(n)
    h, w = obstacle.shape
    use_geo = geo.shape[0] > 0
    kidx = np.empty(9, dtype=np.int64)
    kd = np.empty(9)
    for b in range(nb):
        for i in range(n):
            hx[i] = math.cos(phis[b, i])
            hy[i] = math.sin(phis[b, i])
        ex = paths[b, n - 1, 0]
        ey = paths[b, n - 1, 1]
        nk = 0
        if use_geo:
            ix = int(math.floor(ex / cell))
            iy = int(math.floor(ey / cell))
            for oy in range(-1, 2):
                for ox in range(-1, 2):
                    kx = ix + ox
                    ky = iy + oy
                    if kx < 0 or ky < 0 or kx >= w or ky >= h or obstacle[ky, kx]:
                        continue
                    px = (kx + 0.5) * cell
                    py = (ky + 0.5) * cell
                    if segment_clear(obstacle, cell, ex, ey, px, py):
                        kidx[nk] = ky * w + kx
                        kd[nk] = math.sqrt((px - ex) ** 2 + (py - ey) ** 2)
                        nk += 1
        total = 0.0
        for c in range(nc):
            bc = bel[c]
            if bc == 0.0:
                continue
            tx = cxs[c]
            ty = cys[c]
            d_end = math.sqrt((tx - ex) ** 2 + (ty - ey) ** 2)
            if use_geo and lam > 0.0 and lam < 1.0:
                if sub > 0:
                    seen = visible_cached(obstacle, cell, sub, table, filled, ex, ey, cidx[c])
                else:
                    seen = segment_clear(obstacle, cell, ex, ey, tx, ty)
                if not seen:
                    best = np.inf
                    for j in range(nk):
                        cand = kd[j] + geo[kidx[j], cidx[c]]
                        if cand < best:
                            best = cand
                    d_end = best
            if lam == 0.0:
                hval = 0.0 if d_end == 0.0 else 1.0
            else:
                hval = 1.0 - math.exp(log_lam * d_end / vel)
            if hval == 0.0:
                continue
            q = 1.0
            for i in range(n):
                x = paths[b, i, 0]
                y = paths[b, i, 1]
                dx = tx - x
                dy = ty - y
                d2 = dx * dx + dy * dy
                dot = dx * hx[i] + dy * hy[i]
                # guard band keeps the exact bearing test authoritative at the edge
                if d2 > 0.0 and dot < math.sqrt(d2) * cos_half - 1e-9:
                    continue
                qi = nondetection_one(x, y, phis[b, i], tx, ty, sigma, dmax, alpha,
                                      beta, pdmax, half_fov, amp)
                if qi < 1.0:
                    if sub > 0:
                        vis = visible_cached(obstacle, cell, sub, table, filled, x, y, cidx[c])
                    else:
                        vis = segment_clear(obstacle, cell, x, y, tx, ty)
                    if not vis:
                        qi = 1.0
                q *= qi
            total += q * hval * bc
        u = 1.0 - total
        if u < 0.0:
            u = 0.0
        elif u > 1.0:
            u = 1.0
        out[b] = u
    return out


@njit(cache=True)
def _in_free(obstacle, cell, x, y):
    h, w = obstacle.shape
    ix = int(math.floor(x / cell))
    iy = int(math.floor(y / cell))
    if ix < 0 or iy < 0 or ix >= w or iy >= h:
        return False
    return not obstacle[iy, ix]


@njit(cache=True)
def project_path(sx, sy, path, obstacle, cell, lmax, nearest, ray_step):
    """Project waypoints in place onto the feasible set.

    Per waypoint: clip the step to ``lmax``, clip to the map, snap obstacle
    landings to the nearest free cell center, then truncate the segment at
    the last clear sample (``ray_step`` spacing) if it still crosses an
    obstacle.
    """
    h, w = obstacle.shape
    lo = 1e-6
    hi_x = w * cell - 1e-6
    hi_y = h * cell - 1e-6
    px = sx
    py = sy
    for i in range(path.shape[0]):
        x = path[i, 0]
        y = path[i, 1]
        for _ in range(2):
            dx = x - px
            dy = y - py
            d = math.sqrt(dx * dx + dy * dy)
            if d > lmax:
                x = px + dx * lmax / d
                y = py + dy * lmax / d
            x = min(max(x, lo), hi_x)
            y = min(max(y, lo), hi_y)
            if _in_free(obstacle, cell, x, y):
                break
            ix = int(math.floor(x / cell))
            iy = int(math.floor(y / cell))
            x = nearest[iy, ix, 0]
            y = nearest[iy, ix, 1]
        dx = x - px
        dy = y - py
        d = math.sqrt(dx * dx + dy * dy)
        if d > lmax:
            x = px + dx * lmax / d
            y = py + dy * lmax / d
        # an end point still inside an obstacle fails this check and is truncated
        if not segment_clear(obstacle, cell, px, py, x, y):
            dx = x - px
            dy = y - py
            d = math.sqrt(dx * dx + dy * dy)
            k = int(math.floor(d / ray_step))
            nx = px
            ny = py
            while k > 0:
                t = k * ray_step / d
                cx = px + dx * t
                cy = py + dy * t
                if segment_clear(obstacle, cell, px, py, cx, cy):
                    nx = cx
                    ny = cy
                    break
                k -= 1
            x = nx
            y = ny
        path[i, 0] = x
        path[i, 1] = y
        px = x
        py = y


@njit(cache=True)
def project_batch(sx, sy, paths, obstacle, cell, lmax, nearest, ray_step):
    for b in range(paths.shape[0]):
        project_path(sx, sy, paths[b], obstacle, cell, lmax, nearest, ray_step)
