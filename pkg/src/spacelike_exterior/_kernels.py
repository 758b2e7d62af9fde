"""Compiled loops over simplices.

Regular simplices are described by a cube's base node and a bitmask of the
active Kuhn permutations; ``offs[p, m]`` is the flat-index offset of vertex m
of permutation p and ``axis[p, m]`` the lattice axis of edge m.
"""

import numba
import numpy as np


@numba.njit(cache=True)
def regular_area(u, base, bits, offs, axis, h, vol0, flux, want_flux, strict_q):
    n = axis.shape[1]
    nperm = axis.shape[0]
    energy = 0.0
    dirichlet = 0.0
    qmax = 0.0
    worst_cube = -1
    worst_perm = -1
    g = np.empty(n)
    for c in range(base.size):
        b = base[c]
        mask = bits[c]
        for p in range(nperm):
            if not (mask >> p) & 1:
                continue
            q = 0.0
            for m in range(n):
                val = (u[b + offs[p, m + 1]] - u[b + offs[p, m]]) / h
                g[m] = val
                q += val * val
            if q > qmax:
                qmax = q
                worst_cube = c
                worst_perm = p
                if q > strict_q:
                    return energy, dirichlet, qmax, worst_cube, worst_perm
            root = np.sqrt(max(1.0 - q, 0.0))
            energy += q / (1.0 + root)
            dirichlet += q
            if want_flux:
                scale = vol0 / (h * root)
                for m in range(n):
                    f = g[m] * scale
                    flux[b + offs[p, m + 1]] += f
                    flux[b + offs[p, m]] -= f
    return energy * vol0, dirichlet * vol0, qmax, worst_cube, worst_perm


@numba.njit(cache=True)
def regular_change(u, d, alpha, base, bits, offs, h, vol0, nperm, n):
    delta = 0.0
    qmax = 0.0
    for c in range(base.size):
        b = base[c]
        mask = bits[c]
        for p in range(nperm):
            if not (mask >> p) & 1:
                continue
            q0 = 0.0
            dq = 0.0
            for m in range(n):
                i1 = b + offs[p, m + 1]
                i0 = b + offs[p, m]
                gu = (u[i1] - u[i0]) / h
                gd = (d[i1] - d[i0]) / h
                q0 += gu * gu
                dq += alpha * gd * (2.0 * gu + alpha * gd)
            q1 = q0 + dq
            if q1 > qmax:
                qmax = q1
                if qmax >= 1.0:
                    return np.inf, qmax
            delta += dq / (np.sqrt(1.0 - q0) + np.sqrt(1.0 - q1))
    return delta * vol0, qmax


@numba.njit(cache=True)
def regular_cube_gradients(u, base, bits, offs, axis, h):
    """Mean gradient over the active simplices of each cube (for scans)."""
    n = axis.shape[1]
    nperm = axis.shape[0]
    out = np.zeros((base.size, n))
    for c in range(base.size):
        b = base[c]
        mask = bits[c]
        count = 0
        for p in range(nperm):
            if not (mask >> p) & 1:
                continue
            count += 1
            for m in range(n):
                out[c, axis[p, m]] += (u[b + offs[p, m + 1]] - u[b + offs[p, m]]) / h
        if count:
            for k in range(n):
                out[c, k] /= count
    return out


@numba.njit(cache=True)
def regular_stiffness_weights(base, bits, offs, axis, weight_out):
    """Count Kuhn simplices containing each lattice edge.

    ``weight_out[a, i]`` receives the weight of the lattice edge (i, i + e_a).
    """
    n = axis.shape[1]
    nperm = axis.shape[0]
    for c in range(base.size):
        b = base[c]
        mask = bits[c]
        for p in range(nperm):
            if not (mask >> p) & 1:
                continue
            for m in range(n):
                weight_out[axis[p, m], b + offs[p, m]] += 1.0


def permutation_tables(kuhn, strides):
    n = len(kuhn[0][0])
    offs = np.array([[sum(o[k] * strides[k] for k in range(n)) for o in verts] for _, verts in kuhn],
                    dtype=np.int64)
    axis = np.array([perm for perm, _ in kuhn], dtype=np.int64)
    return offs, axis


@numba.njit(cache=True)
def _star_max(A, B, C, k, t):
    f = 0.0
    for s in range(k):
        val = A[s] * t * t + 2.0 * B[s] * t + C[s]
        if val > f:
            f = val
    return f


@numba.njit(cache=True)
def limit_node_gradients(u, nodes, bound2, lo, hi, cube_of_base, bits, offs, h,
                         irr_ptr, irr_simp, irr_local, irr_verts, irr_inv):
    """One Gauss-Seidel sweep moving each node so its simplex star has |grad|^2 <= bound2.

    The node value is projected onto the interval where every simplex in its
    star satisfies the bound; if that interval is empty the star maximum is
    minimised instead.  No update increases the largest |grad|^2 of the star.
    Returns the number of nodes whose star could not be brought under the bound.
    """
    nperm = offs.shape[0]
    n = offs.shape[1] - 1
    size = u.size
    cap = nperm * (n + 1) + 64
    A = np.empty(cap)
    B = np.empty(cap)
    C = np.empty(cap)
    g = np.empty(n)
    bvec = np.empty(n)
    stuck = 0
    for i in nodes:
        ui = u[i]
        u[i] = 0.0
        k = 0
        for p in range(nperm):
            for m in range(n + 1):
                b0 = i - offs[p, m]
                if b0 < 0 or b0 >= size:
                    continue
                c = cube_of_base[b0]
                if c < 0 or not (bits[c] >> p) & 1:
                    continue
                for j in range(n):
                    g[j] = (u[b0 + offs[p, j + 1]] - u[b0 + offs[p, j]]) / h
                    bvec[j] = 0.0
                if m >= 1:
                    bvec[m - 1] = 1.0 / h
                if m < n:
                    bvec[m] = -1.0 / h
                a_ = 0.0
                b_ = 0.0
                c_ = 0.0
                for j in range(n):
                    a_ += bvec[j] * bvec[j]
                    b_ += g[j] * bvec[j]
                    c_ += g[j] * g[j]
                A[k] = a_
                B[k] = b_
                C[k] = c_
                k += 1
        for e in range(irr_ptr[i], irr_ptr[i + 1]):
            if k >= cap:
                break
            s = irr_simp[e]
            loc = irr_local[e]
            for j in range(n):
                acc = 0.0
                for l in range(n):
                    acc += irr_inv[s, j, l] * (u[irr_verts[s, l + 1]] - u[irr_verts[s, 0]])
                g[j] = acc
                if loc == 0:
                    tot = 0.0
                    for l in range(n):
                        tot -= irr_inv[s, j, l]
                    bvec[j] = tot
                else:
                    bvec[j] = irr_inv[s, j, loc - 1]
            a_ = 0.0
            b_ = 0.0
            c_ = 0.0
            for j in range(n):
                a_ += bvec[j] * bvec[j]
                b_ += g[j] * bvec[j]
                c_ += g[j] * g[j]
            A[k] = a_
            B[k] = b_
            C[k] = c_
            k += 1
        # feasible interval of t
        tlo = lo
        thi = hi
        for s in range(k):
            if A[s] <= 0.0:
                if C[s] > bound2:
                    tlo = 1.0
                    thi = 0.0
                continue
            disc = B[s] * B[s] - A[s] * (C[s] - bound2)
            if disc < 0.0:
                tlo = 1.0
                thi = 0.0
                break
            r = np.sqrt(disc)
            t1 = (-B[s] - r) / A[s]
            t2 = (-B[s] + r) / A[s]
            if t1 > tlo:
                tlo = t1
            if t2 < thi:
                thi = t2
        if tlo <= thi:
            t = min(max(ui, tlo), thi)
        else:
            a = lo
            b = hi
            for _ in range(100):
                m1 = a + (b - a) / 3.0
                m2 = b - (b - a) / 3.0
                if _star_max(A, B, C, k, m1) <= _star_max(A, B, C, k, m2):
                    b = m2
                else:
                    a = m1
            t = 0.5 * (a + b)
            if _star_max(A, B, C, k, t) > _star_max(A, B, C, k, ui):
                t = ui
            stuck += 1
        u[i] = t
    return stuck


@numba.njit(cache=True)
def regular_violators(u, base, bits, offs, h, bound2, flag):
    """Set flag[node] for every vertex of a regular simplex with |grad|^2 > bound2."""
    nperm = offs.shape[0]
    n = offs.shape[1] - 1
    for c in range(base.size):
        b = base[c]
        mask = bits[c]
        for p in range(nperm):
            if not (mask >> p) & 1:
                continue
            q = 0.0
            for m in range(n):
                val = (u[b + offs[p, m + 1]] - u[b + offs[p, m]]) / h
                q += val * val
            if q > bound2:
                for m in range(n + 1):
                    flag[b + offs[p, m]] = True


@numba.njit(cache=True)
def inf_convolution(points, samples, values, slope):
    """min_j values[j] + slope*|points[i] - samples[j]| for every point."""
    m = points.shape[0]
    n = points.shape[1]
    out = np.empty(m)
    for i in range(m):
        best = np.inf
        for j in range(samples.shape[0]):
            d2 = 0.0
            for k in range(n):
                diff = points[i, k] - samples[j, k]
                d2 += diff * diff
            val = values[j] + slope * np.sqrt(d2)
            if val < best:
                best = val
        out[i] = best
    return out


@numba.njit(cache=True)
def regular_cube_steepest(u, base, bits, offs, axis, h):
    """Per cube: largest simplex |grad u|^2 and that simplex's gradient."""
    n = axis.shape[1]
    nperm = axis.shape[0]
    qmax = np.full(base.size, -1.0)
    grad = np.zeros((base.size, n))
    g = np.empty(n)
    for c in range(base.size):
        b = base[c]
        mask = bits[c]
        for p in range(nperm):
            if not (mask >> p) & 1:
                continue
            q = 0.0
            for m in range(n):
                val = (u[b + offs[p, m + 1]] - u[b + offs[p, m]]) / h
                g[axis[p, m]] = val
                q += val * val
            if q > qmax[c]:
                qmax[c] = q
                for k in range(n):
                    grad[c, k] = g[k]
    return qmax, grad


@numba.njit(cache=True)
def regular_count_above(u, base, bits, offs, h, level2):
    nperm = offs.shape[0]
    n = offs.shape[1] - 1
    count = 0
    for c in range(base.size):
        b = base[c]
        mask = bits[c]
        for p in range(nperm):
            if not (mask >> p) & 1:
                continue
            q = 0.0
            for m in range(n):
                val = (u[b + offs[p, m + 1]] - u[b + offs[p, m]]) / h
                q += val * val
            if q > level2:
                count += 1
    return count


@numba.njit(cache=True)
def regular_metric_weights(u, base, bits, offs, axis, h, wmax, weight_out):
    """As :func:`regular_stiffness_weights`, each simplex counted with weight 1/sqrt(1 - |grad u|^2)."""
    n = axis.shape[1]
    nperm = axis.shape[0]
    floor = 1.0 / (wmax * wmax)
    for c in range(base.size):
        b = base[c]
        mask = bits[c]
        for p in range(nperm):
            if not (mask >> p) & 1:
                continue
            q = 0.0
            for m in range(n):
                val = (u[b + offs[p, m + 1]] - u[b + offs[p, m]]) / h
                q += val * val
            w = wmax
            if 1.0 - q > floor:
                w = 1.0 / np.sqrt(1.0 - q)
            for m in range(n):
                weight_out[axis[p, m], b + offs[p, m]] += w
