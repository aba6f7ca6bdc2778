"""Per-vertex MPFA elimination kernels.

All functions use the numba-compatible subset of numpy and are compiled by
:func:`ncrflow._jit.jit` when numba is enabled.  A fan with ``m`` cells has
``m`` edges when it is interior (cyclic) and ``m + 1`` when its centre lies
on the boundary.  Cell ``i`` sits between edges ``i`` and ``i + 1``.

The local gradient on quadrangle ``i`` is

    G_i = a_i (qt[i] S_in[i] + qt[i+1] S_out[i] + qb[i] S_opp[i]),
    a_i = 3 / (2 |K_i|),

with ``qt`` the auxiliary edge values and ``qb`` the cell values.
"""

import numpy as np

from ._jit import jit


@jit
def local_system(area, s_in, s_out, s_opp, boundary):
    """Assemble ``A qt = R qb + F flux`` for one fan.

    Rows follow edges: row ``e`` of an interior edge is the flux continuity
    across it, rows ``0`` and ``m`` of a boundary fan prescribe the normal
    flux through the two boundary half-edges.
    """
    m = area.shape[0]
    ne = m + 1 if boundary else m
    A = np.zeros((ne, ne))
    R = np.zeros((ne, m))
    F = np.zeros((ne, 2))
    a = 1.5 / area
    ncont = m - 1 if boundary else m
    for i in range(ncont):
        j = (i + 1) % m
        e = (i + 1) % ne
        t0 = s_out[i, 0]
        t1 = s_out[i, 1]
        A[e, i] += a[i] * (s_in[i, 0] * t0 + s_in[i, 1] * t1)
        A[e, e] += a[i] * (s_out[i, 0] * t0 + s_out[i, 1] * t1)
        R[e, i] -= a[i] * (s_opp[i, 0] * t0 + s_opp[i, 1] * t1)
        t0 = s_in[j, 0]
        t1 = s_in[j, 1]
        A[e, e] += a[j] * (s_in[j, 0] * t0 + s_in[j, 1] * t1)
        A[e, (e + 1) % ne] += a[j] * (s_out[j, 0] * t0 + s_out[j, 1] * t1)
        R[e, j] -= a[j] * (s_opp[j, 0] * t0 + s_opp[j, 1] * t1)
    if boundary:
        # |half edge| G.n = G.S / 2 with S the scaled outward normal
        h0 = 0.5 * a[0]
        t0 = s_in[0, 0]
        t1 = s_in[0, 1]
        A[0, 0] += h0 * (s_in[0, 0] * t0 + s_in[0, 1] * t1)
        A[0, 1] += h0 * (s_out[0, 0] * t0 + s_out[0, 1] * t1)
        R[0, 0] -= h0 * (s_opp[0, 0] * t0 + s_opp[0, 1] * t1)
        F[0, 0] = 1.0
        k = m - 1
        hk = 0.5 * a[k]
        t0 = s_out[k, 0]
        t1 = s_out[k, 1]
        A[m, m - 1] += hk * (s_in[k, 0] * t0 + s_in[k, 1] * t1)
        A[m, m] += hk * (s_out[k, 0] * t0 + s_out[k, 1] * t1)
        R[m, k] -= hk * (s_opp[k, 0] * t0 + s_opp[k, 1] * t1)
        F[m, 1] = 1.0
    return A, R, F


@jit
def eliminate_fan(area, s_in, s_out, s_opp, boundary):
    """Eliminate the auxiliary unknowns of one fan.

    Returns ``(C, E, cond)`` with ``C[i, l]`` the gradient on quadrangle ``i``
    per unit value in cell ``l``, ``E[i, k]`` the gradient per unit flux
    through boundary half-edge ``k`` (zero for interior fans) and the
    2-norm condition number of the local matrix.
    """
    m = area.shape[0]
    A, R, F = local_system(area, s_in, s_out, s_opp, boundary)
    ne = A.shape[0]
    rhs = np.empty((ne, m + 2))
    rhs[:, :m] = R
    rhs[:, m:] = F
    cond = np.linalg.cond(A)
    X = np.linalg.solve(A, rhs)
    a = 1.5 / area
    C = np.zeros((m, m, 2))
    E = np.zeros((m, 2, 2))
    for i in range(m):
        nxt = (i + 1) % ne
        for l in range(m):
            for d in range(2):
                C[i, l, d] = a[i] * (s_in[i, d] * X[i, l] + s_out[i, d] * X[nxt, l])
        for d in range(2):
            C[i, i, d] += a[i] * s_opp[i, d]
        if boundary:
            for k in range(2):
                for d in range(2):
                    E[i, k, d] = a[i] * (s_in[i, d] * X[i, m + k] + s_out[i, d] * X[nxt, m + k])
    return C, E, cond


@jit
def eliminate_all(fan_ptr, coef_ptr, area, s_in, s_out, s_opp, is_boundary,
                  coef_out, flux_out, cond_out):
    """Run :func:`eliminate_fan` over every vertex of a flattened fan table.

    Fan ``v`` owns positions ``fan_ptr[v]:fan_ptr[v+1]`` of the per-position
    arrays and rows ``coef_ptr[v]:coef_ptr[v+1]`` (``m * m`` of them, row
    ``i * m + l``) of ``coef_out``.
    """
    nv = fan_ptr.shape[0] - 1
    for v in range(nv):
        s = fan_ptr[v]
        e = fan_ptr[v + 1]
        m = e - s
        C, E, cond = eliminate_fan(area[s:e], s_in[s:e], s_out[s:e], s_opp[s:e], is_boundary[v])
        c0 = coef_ptr[v]
        for i in range(m):
            for l in range(m):
                coef_out[c0 + i * m + l, 0] = C[i, l, 0]
                coef_out[c0 + i * m + l, 1] = C[i, l, 1]
            for k in range(2):
                flux_out[s + i, k, 0] = E[i, k, 0]
                flux_out[s + i, k, 1] = E[i, k, 1]
        cond_out[v] = cond


@jit
def apply_coefficients(fan_ptr, coef_ptr, fan_cells, coef, flux_coef, half_edge, pressure, flux):
    """Quadrangle gradients ``(npos, 2)`` for a P0 pressure and half-edge fluxes."""
    nv = fan_ptr.shape[0] - 1
    out = np.zeros((fan_cells.shape[0], 2))
    for v in range(nv):
        s = fan_ptr[v]
        m = fan_ptr[v + 1] - s
        c0 = coef_ptr[v]
        for i in range(m):
            g0 = 0.0
            g1 = 0.0
            for l in range(m):
                q = pressure[fan_cells[s + l]]
                g0 += coef[c0 + i * m + l, 0] * q
                g1 += coef[c0 + i * m + l, 1] * q
            for k in range(2):
                he = half_edge[s + i, k]
                if he >= 0:
                    g0 += flux_coef[s + i, k, 0] * flux[he]
                    g1 += flux_coef[s + i, k, 1] * flux[he]
            out[s + i, 0] = g0
            out[s + i, 1] = g1
    return out
