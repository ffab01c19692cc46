"""Allocation-free numba kernels for the MLS-MPM solver.

The 3x3 SVD is a cyclic-Jacobi eigensolver on F^T F (fast and branch-light;
LAPACK calls per particle are an order of magnitude slower here). All
scratch matrices are allocated once per kernel call and reused across
particles.
"""

import numpy as np
from numba import njit

KIND_ELASTIC = 0
KIND_ELASTOPLASTIC = 1
KIND_SAND = 2
KIND_LIQUID = 3


@njit(cache=True)
def _sym_eig3(A, V):
    """Cyclic Jacobi diagonalization of symmetric A in place; V gets the
    eigenvectors (columns)."""
    V[0, 0] = 1.0; V[0, 1] = 0.0; V[0, 2] = 0.0
    V[1, 0] = 0.0; V[1, 1] = 1.0; V[1, 2] = 0.0
    V[2, 0] = 0.0; V[2, 1] = 0.0; V[2, 2] = 1.0
    for _ in range(12):
        off = abs(A[0, 1]) + abs(A[0, 2]) + abs(A[1, 2])
        scale = abs(A[0, 0]) + abs(A[1, 1]) + abs(A[2, 2]) + 1e-300
        if off < 1e-15 * scale:
            break
        for k in range(3):
            if k == 0:
                p, q = 0, 1
            elif k == 1:
                p, q = 0, 2
            else:
                p, q = 1, 2
            apq = A[p, q]
            if abs(apq) < 1e-300:
                continue
            theta = (A[q, q] - A[p, p]) / (2.0 * apq)
            t = 1.0 / (abs(theta) + np.sqrt(theta * theta + 1.0))
            if theta < 0.0:
                t = -t
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            app = A[p, p]; aqq = A[q, q]
            A[p, p] = app - t * apq
            A[q, q] = aqq + t * apq
            A[p, q] = 0.0
            A[q, p] = 0.0
            r = 3 - p - q
            arp = A[r, p]; arq = A[r, q]
            A[r, p] = c * arp - s * arq
            A[p, r] = A[r, p]
            A[r, q] = s * arp + c * arq
            A[q, r] = A[r, q]
            for i in range(3):
                vip = V[i, p]; viq = V[i, q]
                V[i, p] = c * vip - s * viq
                V[i, q] = s * vip + c * viq


@njit(cache=True)
def _svd3(F, U, sig, V, scratch):
    """F = U diag(sig) V^T with det(U) = det(V) = +1 (sig[2] takes the sign
    of det F)."""
    # scratch <- F^T F
    for i in range(3):
        for j in range(3):
            acc = 0.0
            for k in range(3):
                acc += F[k, i] * F[k, j]
            scratch[i, j] = acc
    _sym_eig3(scratch, V)
    e0 = scratch[0, 0]; e1 = scratch[1, 1]; e2 = scratch[2, 2]
    # sort eigenpairs descending
    if e0 < e1:
        e0, e1 = e1, e0
        for i in range(3):
            V[i, 0], V[i, 1] = V[i, 1], V[i, 0]
    if e0 < e2:
        e0, e2 = e2, e0
        for i in range(3):
            V[i, 0], V[i, 2] = V[i, 2], V[i, 0]
    if e1 < e2:
        e1, e2 = e2, e1
        for i in range(3):
            V[i, 1], V[i, 2] = V[i, 2], V[i, 1]
    sig[0] = np.sqrt(max(e0, 0.0))
    sig[1] = np.sqrt(max(e1, 0.0))
    sig[2] = np.sqrt(max(e2, 0.0))
    detv = (V[0, 0] * (V[1, 1] * V[2, 2] - V[1, 2] * V[2, 1])
            - V[0, 1] * (V[1, 0] * V[2, 2] - V[1, 2] * V[2, 0])
            + V[0, 2] * (V[1, 0] * V[2, 1] - V[1, 1] * V[2, 0]))
    if detv < 0.0:
        V[0, 2] = -V[0, 2]; V[1, 2] = -V[1, 2]; V[2, 2] = -V[2, 2]
    for col in range(3):
        if sig[col] > 1e-12:
            inv = 1.0 / sig[col]
            for i in range(3):
                acc = 0.0
                for k in range(3):
                    acc += F[i, k] * V[k, col]
                U[i, col] = acc * inv
        else:
            # degenerate direction: complete with a cross product
            a = (col + 1) % 3
            b = (col + 2) % 3
            U[0, col] = U[1, a] * U[2, b] - U[2, a] * U[1, b]
            U[1, col] = U[2, a] * U[0, b] - U[0, a] * U[2, b]
            U[2, col] = U[0, a] * U[1, b] - U[1, a] * U[0, b]
            n = np.sqrt(U[0, col] ** 2 + U[1, col] ** 2 + U[2, col] ** 2)
            if n > 1e-300:
                U[0, col] /= n; U[1, col] /= n; U[2, col] /= n
            else:
                U[0, col] = 1.0 if col == 0 else 0.0
                U[1, col] = 1.0 if col == 1 else 0.0
                U[2, col] = 1.0 if col == 2 else 0.0
    detu = (U[0, 0] * (U[1, 1] * U[2, 2] - U[1, 2] * U[2, 1])
            - U[0, 1] * (U[1, 0] * U[2, 2] - U[1, 2] * U[2, 0])
            + U[0, 2] * (U[1, 0] * U[2, 1] - U[1, 1] * U[2, 0]))
    if detu < 0.0:
        U[0, 2] = -U[0, 2]; U[1, 2] = -U[1, 2]; U[2, 2] = -U[2, 2]
        sig[2] = -sig[2]


@njit(cache=True)
def p2g(x, v, F, C, Jp, mass, vol, mu_p, lam_p, kind, yield_stress,
        sand_alpha, dt, dx, inv_dx, ox, oy, oz, grid_v, grid_m):
    """Constitutive update + particle-to-grid scatter (momentum + mass)."""
    U = np.empty((3, 3))
    V = np.empty((3, 3))
    sig = np.empty(3)
    scratch = np.empty((3, 3))
    Fp = np.empty((3, 3))
    stress = np.empty((3, 3))
    affine = np.empty((3, 3))
    stress_coef = -dt * 4.0 * inv_dx * inv_dx
    for p in range(x.shape[0]):
        k = kind[p]
        mu = mu_p[p]
        lam = lam_p[p]
        if k == KIND_LIQUID:
            Jp[p] *= 1.0 + dt * (C[p, 0, 0] + C[p, 1, 1] + C[p, 2, 2])
            if Jp[p] < 0.05:
                Jp[p] = 0.05
            kbulk = lam + 2.0 * mu / 3.0
            pr = kbulk * (Jp[p] - 1.0)
            for i in range(3):
                for j in range(3):
                    stress[i, j] = pr if i == j else 0.0
        else:
            # F <- (I + dt C) F
            for i in range(3):
                for j in range(3):
                    acc = F[p, i, j]
                    for m in range(3):
                        acc += dt * C[p, i, m] * F[p, m, j]
                    Fp[i, j] = acc
            _svd3(Fp, U, sig, V, scratch)
            if k == KIND_ELASTOPLASTIC:
                # von Mises return map on the Hencky strain
                l0 = np.log(max(sig[0], 1e-6))
                l1 = np.log(max(sig[1], 1e-6))
                l2 = np.log(max(sig[2], 1e-6))
                mean = (l0 + l1 + l2) / 3.0
                d0 = l0 - mean; d1 = l1 - mean; d2 = l2 - mean
                dn = np.sqrt(d0 * d0 + d1 * d1 + d2 * d2)
                limit = yield_stress[p] / (2.0 * mu)
                if dn > limit:
                    scl = (dn - limit) / dn
                    sig[0] = np.exp(l0 - scl * d0)
                    sig[1] = np.exp(l1 - scl * d1)
                    sig[2] = np.exp(l2 - scl * d2)
                    _compose_usv(U, sig, V, Fp)
            if k == KIND_SAND:
                l0 = np.log(max(sig[0], 1e-6))
                l1 = np.log(max(sig[1], 1e-6))
                l2 = np.log(max(sig[2], 1e-6))
                tr = l0 + l1 + l2
                d0 = l0 - tr / 3.0; d1 = l1 - tr / 3.0; d2 = l2 - tr / 3.0
                dn = np.sqrt(d0 * d0 + d1 * d1 + d2 * d2)
                if tr > 0.0 or dn < 1e-12:
                    l0 = 0.0; l1 = 0.0; l2 = 0.0  # cone apex: stress-free
                else:
                    dgamma = dn + (3.0 * lam + 2.0 * mu) / (2.0 * mu) \
                        * tr * sand_alpha[p]
                    if dgamma > 0.0:
                        scl = dgamma / dn
                        l0 -= scl * d0; l1 -= scl * d1; l2 -= scl * d2
                sig[0] = np.exp(l0); sig[1] = np.exp(l1); sig[2] = np.exp(l2)
                _compose_usv(U, sig, V, Fp)
                # StVK-Hencky Kirchhoff stress: U diag(2 mu l + lam tr) U^T
                tr = l0 + l1 + l2
                t0 = 2.0 * mu * l0 + lam * tr
                t1 = 2.0 * mu * l1 + lam * tr
                t2 = 2.0 * mu * l2 + lam * tr
                for i in range(3):
                    for j in range(3):
                        stress[i, j] = (U[i, 0] * t0 * U[j, 0]
                                        + U[i, 1] * t1 * U[j, 1]
                                        + U[i, 2] * t2 * U[j, 2])
            else:
                # fixed corotated: 2 mu (F - R) F^T + lam J (J - 1) I
                J = sig[0] * sig[1] * sig[2]
                for i in range(3):
                    for j in range(3):
                        acc = 0.0
                        for m in range(3):
                            r_im = (U[i, 0] * V[m, 0] + U[i, 1] * V[m, 1]
                                    + U[i, 2] * V[m, 2])
                            acc += (Fp[i, m] - r_im) * Fp[j, m]
                        stress[i, j] = 2.0 * mu * acc
                    stress[i, i] += lam * J * (J - 1.0)
            for i in range(3):
                for j in range(3):
                    F[p, i, j] = Fp[i, j]
        vp = vol[p]
        mp = mass[p]
        for i in range(3):
            for j in range(3):
                affine[i, j] = stress_coef * vp * stress[i, j] \
                    + mp * C[p, i, j]
        bx = int(np.floor(x[p, 0] * inv_dx - 0.5))
        by = int(np.floor(x[p, 1] * inv_dx - 0.5))
        bz = int(np.floor(x[p, 2] * inv_dx - 0.5))
        fx = x[p, 0] * inv_dx - bx
        fy = x[p, 1] * inv_dx - by
        fz = x[p, 2] * inv_dx - bz
        wx0 = 0.5 * (1.5 - fx) ** 2; wx1 = 0.75 - (fx - 1.0) ** 2
        wx2 = 0.5 * (fx - 0.5) ** 2
        wy0 = 0.5 * (1.5 - fy) ** 2; wy1 = 0.75 - (fy - 1.0) ** 2
        wy2 = 0.5 * (fy - 0.5) ** 2
        wz0 = 0.5 * (1.5 - fz) ** 2; wz1 = 0.75 - (fz - 1.0) ** 2
        wz2 = 0.5 * (fz - 0.5) ** 2
        mvx = mp * v[p, 0]; mvy = mp * v[p, 1]; mvz = mp * v[p, 2]
        for i in range(3):
            wi = wx0 if i == 0 else (wx1 if i == 1 else wx2)
            dpx = (i - fx) * dx
            gi = bx + i - ox
            for j in range(3):
                wj = wy0 if j == 0 else (wy1 if j == 1 else wy2)
                dpy = (j - fy) * dx
                gj = by + j - oy
                wij = wi * wj
                for l in range(3):
                    wl = wz0 if l == 0 else (wz1 if l == 1 else wz2)
                    dpz = (l - fz) * dx
                    gk = bz + l - oz
                    w = wij * wl
                    grid_v[gi, gj, gk, 0] += w * (mvx + affine[0, 0] * dpx
                                                  + affine[0, 1] * dpy
                                                  + affine[0, 2] * dpz)
                    grid_v[gi, gj, gk, 1] += w * (mvy + affine[1, 0] * dpx
                                                  + affine[1, 1] * dpy
                                                  + affine[1, 2] * dpz)
                    grid_v[gi, gj, gk, 2] += w * (mvz + affine[2, 0] * dpx
                                                  + affine[2, 1] * dpy
                                                  + affine[2, 2] * dpz)
                    grid_m[gi, gj, gk] += w * mp


@njit(cache=True)
def _compose_usv(U, sig, V, out):
    """out <- U diag(sig) V^T"""
    for i in range(3):
        for j in range(3):
            out[i, j] = (U[i, 0] * sig[0] * V[j, 0]
                         + U[i, 1] * sig[1] * V[j, 1]
                         + U[i, 2] * sig[2] * V[j, 2])


@njit(cache=True)
def g2p(x, v, C, grid_v, dt, dx, inv_dx, ox, oy, oz, lo, hi, escaped):
    """Grid-to-particle gather, advection and domain clamping."""
    coef = 4.0 * inv_dx * inv_dx
    for p in range(x.shape[0]):
        bx = int(np.floor(x[p, 0] * inv_dx - 0.5))
        by = int(np.floor(x[p, 1] * inv_dx - 0.5))
        bz = int(np.floor(x[p, 2] * inv_dx - 0.5))
        fx = x[p, 0] * inv_dx - bx
        fy = x[p, 1] * inv_dx - by
        fz = x[p, 2] * inv_dx - bz
        wx0 = 0.5 * (1.5 - fx) ** 2; wx1 = 0.75 - (fx - 1.0) ** 2
        wx2 = 0.5 * (fx - 0.5) ** 2
        wy0 = 0.5 * (1.5 - fy) ** 2; wy1 = 0.75 - (fy - 1.0) ** 2
        wy2 = 0.5 * (fy - 0.5) ** 2
        wz0 = 0.5 * (1.5 - fz) ** 2; wz1 = 0.75 - (fz - 1.0) ** 2
        wz2 = 0.5 * (fz - 0.5) ** 2
        nvx = 0.0; nvy = 0.0; nvz = 0.0
        c00 = 0.0; c01 = 0.0; c02 = 0.0
        c10 = 0.0; c11 = 0.0; c12 = 0.0
        c20 = 0.0; c21 = 0.0; c22 = 0.0
        for i in range(3):
            wi = wx0 if i == 0 else (wx1 if i == 1 else wx2)
            dpx = (i - fx) * dx
            gi = bx + i - ox
            for j in range(3):
                wj = wy0 if j == 0 else (wy1 if j == 1 else wy2)
                dpy = (j - fy) * dx
                gj = by + j - oy
                wij = wi * wj
                for l in range(3):
                    wl = wz0 if l == 0 else (wz1 if l == 1 else wz2)
                    dpz = (l - fz) * dx
                    gk = bz + l - oz
                    w = wij * wl
                    gvx = grid_v[gi, gj, gk, 0]
                    gvy = grid_v[gi, gj, gk, 1]
                    gvz = grid_v[gi, gj, gk, 2]
                    nvx += w * gvx
                    nvy += w * gvy
                    nvz += w * gvz
                    cw = coef * w
                    c00 += cw * gvx * dpx; c01 += cw * gvx * dpy
                    c02 += cw * gvx * dpz
                    c10 += cw * gvy * dpx; c11 += cw * gvy * dpy
                    c12 += cw * gvy * dpz
                    c20 += cw * gvz * dpx; c21 += cw * gvz * dpy
                    c22 += cw * gvz * dpz
        v[p, 0] = nvx; v[p, 1] = nvy; v[p, 2] = nvz
        C[p, 0, 0] = c00; C[p, 0, 1] = c01; C[p, 0, 2] = c02
        C[p, 1, 0] = c10; C[p, 1, 1] = c11; C[p, 1, 2] = c12
        C[p, 2, 0] = c20; C[p, 2, 1] = c21; C[p, 2, 2] = c22
        x[p, 0] += dt * nvx
        x[p, 1] += dt * nvy
        x[p, 2] += dt * nvz
        for a in range(3):
            if x[p, a] < lo:
                x[p, a] = lo
                v[p, a] = 0.0
                escaped[0] += 1
            elif x[p, a] > hi:
                x[p, a] = hi
                v[p, a] = 0.0
                escaped[0] += 1
