"""Serial numba kernels for the finite-volume machinery.

All kernels are plain loops over the structured grid so results are
deterministic and independent of any parallel partition.  Cell classes
follow geometry.CellClass (0 solid, 1 fluid, 2 porous, 3 inlet, 4 outlet).
"""

import numpy as np
from numba import njit

SOLID, FLUID, POROUS, INLET, OUTLET = 0, 1, 2, 3, 4


@njit(cache=True)
def assemble_transport(cls, fx, fy, fz, gamma, phi, phi_bc, use_sou,
                       dx, dy, dz,
                       ap, aw, ae, as_, an, ab, at, b):
    """Convection (implicit first-order upwind) + diffusion coefficients.

    gamma is the cell diffusion coefficient; phi_bc supplies Dirichlet
    values read at inlet cells; phi is the previous iterate, used for the
    second-order-upwind deferred correction (use_sou) and the outlet
    inflow guard.  Writes ap/neighbor/b in place; rows of non-solved cells
    become identity.
    """
    nx, ny, nz = cls.shape
    ax_area = dy * dz
    ay_area = dx * dz
    az_area = dx * dy
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                c = cls[i, j, k]
                if c != FLUID and c != POROUS:
                    ap[i, j, k] = 1.0
                    aw[i, j, k] = ae[i, j, k] = 0.0
                    as_[i, j, k] = an[i, j, k] = 0.0
                    ab[i, j, k] = at[i, j, k] = 0.0
                    b[i, j, k] = phi[i, j, k]
                    continue
                diag = 0.0
                rhs = 0.0
                g_p = gamma[i, j, k]
                # direction table: (di, dj, dk, area, delta, flux, fsign)
                for d in range(6):
                    if d == 0:
                        ni, nj, nk = i - 1, j, k
                        area, delta = ax_area, dx
                        fout = -fx[i, j, k]
                    elif d == 1:
                        ni, nj, nk = i + 1, j, k
                        area, delta = ax_area, dx
                        fout = fx[i + 1, j, k]
                    elif d == 2:
                        ni, nj, nk = i, j - 1, k
                        area, delta = ay_area, dy
                        fout = -fy[i, j, k]
                    elif d == 3:
                        ni, nj, nk = i, j + 1, k
                        area, delta = ay_area, dy
                        fout = fy[i, j + 1, k]
                    elif d == 4:
                        ni, nj, nk = i, j, k - 1
                        area, delta = az_area, dz
                        fout = -fz[i, j, k]
                    else:
                        ni, nj, nk = i, j, k + 1
                        area, delta = az_area, dz
                        fout = fz[i, j, k + 1]
                    coef = 0.0
                    if 0 <= ni < nx and 0 <= nj < ny and 0 <= nk < nz:
                        nc = cls[ni, nj, nk]
                        if nc == FLUID or nc == POROUS:
                            dcoef = 0.5 * (g_p + gamma[ni, nj, nk]) \
                                * area / delta
                            coef = dcoef + max(-fout, 0.0)
                            diag += dcoef + max(fout, 0.0)
                        elif nc == INLET:
                            dcoef = 0.5 * (g_p + gamma[ni, nj, nk]) \
                                * area / delta
                            diag += dcoef + max(fout, 0.0)
                            rhs += (dcoef + max(-fout, 0.0)) \
                                * phi_bc[ni, nj, nk]
                        elif nc == OUTLET:
                            diag += max(fout, 0.0)
                            rhs += max(-fout, 0.0) * phi[i, j, k]
                    if d == 0:
                        aw[i, j, k] = coef
                    elif d == 1:
                        ae[i, j, k] = coef
                    elif d == 2:
                        as_[i, j, k] = coef
                    elif d == 3:
                        an[i, j, k] = coef
                    elif d == 4:
                        ab[i, j, k] = coef
                    else:
                        at[i, j, k] = coef
                ap[i, j, k] = diag
                b[i, j, k] = rhs

    if not use_sou:
        return
    # deferred second-order-upwind correction over interior faces, with a
    # first-order fallback wherever the second upwind cell is unavailable
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                if cls[i, j, k] != FLUID and cls[i, j, k] != POROUS:
                    continue
                for d in range(3):
                    if d == 0:
                        ni, nj, nk = i + 1, j, k
                        if ni >= nx:
                            continue
                        f = fx[i + 1, j, k]
                    elif d == 1:
                        ni, nj, nk = i, j + 1, k
                        if nj >= ny:
                            continue
                        f = fy[i, j + 1, k]
                    else:
                        ni, nj, nk = i, j, k + 1
                        if nk >= nz:
                            continue
                        f = fz[i, j, k + 1]
                    nc = cls[ni, nj, nk]
                    if nc != FLUID and nc != POROUS:
                        continue
                    if f == 0.0:
                        continue
                    if f > 0.0:
                        ui, uj, uk = i, j, k
                        wi, wj, wk = 2 * i - ni, 2 * j - nj, 2 * k - nk
                    else:
                        ui, uj, uk = ni, nj, nk
                        wi, wj, wk = 2 * ni - i, 2 * nj - j, 2 * nk - k
                    corr = 0.0
                    if 0 <= wi < nx and 0 <= wj < ny and 0 <= wk < nz:
                        wc = cls[wi, wj, wk]
                        if wc == FLUID or wc == POROUS or wc == INLET:
                            corr = 0.5 * (phi[ui, uj, uk]
                                          - phi[wi, wj, wk])
                    if corr != 0.0:
                        b[i, j, k] -= f * corr
                        b[ni, nj, nk] += f * corr


@njit(cache=True)
def rb_sweep(ap, aw, ae, as_, an, ab, at, b, x, solve, color):
    """One Gauss-Seidel half-sweep over cells of one checkerboard color.

    Same-color cells only read the other color, so the sweep is
    order-independent within a color.
    """
    nx, ny, nz = x.shape
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                if solve[i, j, k] == 0 or (i + j + k) & 1 != color:
                    continue
                s = b[i, j, k]
                if i > 0:
                    s += aw[i, j, k] * x[i - 1, j, k]
                if i < nx - 1:
                    s += ae[i, j, k] * x[i + 1, j, k]
                if j > 0:
                    s += as_[i, j, k] * x[i, j - 1, k]
                if j < ny - 1:
                    s += an[i, j, k] * x[i, j + 1, k]
                if k > 0:
                    s += ab[i, j, k] * x[i, j, k - 1]
                if k < nz - 1:
                    s += at[i, j, k] * x[i, j, k + 1]
                x[i, j, k] = s / ap[i, j, k]


@njit(cache=True)
def gs_sweep(ap, aw, ae, as_, an, ab, at, b, x, solve, backward):
    """One lexicographic Gauss-Seidel sweep (forward or backward)."""
    nx, ny, nz = x.shape
    if backward:
        for i in range(nx - 1, -1, -1):
            for j in range(ny - 1, -1, -1):
                for k in range(nz - 1, -1, -1):
                    if solve[i, j, k] == 0:
                        continue
                    s = b[i, j, k]
                    if i > 0:
                        s += aw[i, j, k] * x[i - 1, j, k]
                    if i < nx - 1:
                        s += ae[i, j, k] * x[i + 1, j, k]
                    if j > 0:
                        s += as_[i, j, k] * x[i, j - 1, k]
                    if j < ny - 1:
                        s += an[i, j, k] * x[i, j + 1, k]
                    if k > 0:
                        s += ab[i, j, k] * x[i, j, k - 1]
                    if k < nz - 1:
                        s += at[i, j, k] * x[i, j, k + 1]
                    x[i, j, k] = s / ap[i, j, k]
    else:
        for i in range(nx):
            for j in range(ny):
                for k in range(nz):
                    if solve[i, j, k] == 0:
                        continue
                    s = b[i, j, k]
                    if i > 0:
                        s += aw[i, j, k] * x[i - 1, j, k]
                    if i < nx - 1:
                        s += ae[i, j, k] * x[i + 1, j, k]
                    if j > 0:
                        s += as_[i, j, k] * x[i, j - 1, k]
                    if j < ny - 1:
                        s += an[i, j, k] * x[i, j + 1, k]
                    if k > 0:
                        s += ab[i, j, k] * x[i, j, k - 1]
                    if k < nz - 1:
                        s += at[i, j, k] * x[i, j, k + 1]
                    x[i, j, k] = s / ap[i, j, k]


@njit(cache=True)
def residual(ap, aw, ae, as_, an, ab, at, b, x, solve, out):
    nx, ny, nz = x.shape
    acc = 0.0
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                if solve[i, j, k] == 0:
                    out[i, j, k] = 0.0
                    continue
                s = b[i, j, k] - ap[i, j, k] * x[i, j, k]
                if i > 0:
                    s += aw[i, j, k] * x[i - 1, j, k]
                if i < nx - 1:
                    s += ae[i, j, k] * x[i + 1, j, k]
                if j > 0:
                    s += as_[i, j, k] * x[i, j - 1, k]
                if j < ny - 1:
                    s += an[i, j, k] * x[i, j + 1, k]
                if k > 0:
                    s += ab[i, j, k] * x[i, j, k - 1]
                if k < nz - 1:
                    s += at[i, j, k] * x[i, j, k + 1]
                out[i, j, k] = s
                acc += s * s
    return np.sqrt(acc)


@njit(cache=True)
def cell_gradient(p, solve, dx, dy, dz, gx, gy, gz):
    """Pressure gradient: central where both neighbors are solved,
    one-sided at solve-mask boundaries (exact for linear fields), zero
    where isolated."""
    nx, ny, nz = p.shape
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                if solve[i, j, k] == 0:
                    gx[i, j, k] = gy[i, j, k] = gz[i, j, k] = 0.0
                    continue
                pc = p[i, j, k]
                for ax in range(3):
                    if ax == 0:
                        has_m = i > 0 and solve[i - 1, j, k] != 0
                        has_p = i < nx - 1 and solve[i + 1, j, k] != 0
                        pm = p[i - 1, j, k] if has_m else 0.0
                        pp = p[i + 1, j, k] if has_p else 0.0
                        delta = dx
                    elif ax == 1:
                        has_m = j > 0 and solve[i, j - 1, k] != 0
                        has_p = j < ny - 1 and solve[i, j + 1, k] != 0
                        pm = p[i, j - 1, k] if has_m else 0.0
                        pp = p[i, j + 1, k] if has_p else 0.0
                        delta = dy
                    else:
                        has_m = k > 0 and solve[i, j, k - 1] != 0
                        has_p = k < nz - 1 and solve[i, j, k + 1] != 0
                        pm = p[i, j, k - 1] if has_m else 0.0
                        pp = p[i, j, k + 1] if has_p else 0.0
                        delta = dz
                    if has_m and has_p:
                        g = (pp - pm) / (2.0 * delta)
                    elif has_p:
                        g = (pp - pc) / delta
                    elif has_m:
                        g = (pc - pm) / delta
                    else:
                        g = 0.0
                    if ax == 0:
                        gx[i, j, k] = g
                    elif ax == 1:
                        gy[i, j, k] = g
                    else:
                        gz[i, j, k] = g


@njit(cache=True)
def rhie_chow_fluxes(cls, u, v, w, p, gx, gy, gz, dux, dvy, dwz,
                     rho, dx, dy, dz, fx, fy, fz):
    """Momentum-interpolated volume fluxes at interior solved-solved faces.

    dux/dvy/dwz are V/a_P of the matching momentum component.  Inlet,
    outlet, and wall faces are left untouched (maintained separately).
    """
    nx, ny, nz = cls.shape
    ax_area = dy * dz
    ay_area = dx * dz
    az_area = dx * dy
    for i in range(1, nx):
        for j in range(ny):
            for k in range(nz):
                ca = cls[i - 1, j, k]
                cb = cls[i, j, k]
                if (ca == FLUID or ca == POROUS) and \
                        (cb == FLUID or cb == POROUS):
                    d_f = 0.5 * (dux[i - 1, j, k] + dux[i, j, k])
                    ubar = 0.5 * (u[i - 1, j, k] + u[i, j, k])
                    gp = 0.5 * (gx[i - 1, j, k] + gx[i, j, k])
                    corr = d_f / rho * ((p[i, j, k] - p[i - 1, j, k]) / dx
                                        - gp)
                    fx[i, j, k] = (ubar - corr) * ax_area
    for i in range(nx):
        for j in range(1, ny):
            for k in range(nz):
                ca = cls[i, j - 1, k]
                cb = cls[i, j, k]
                if (ca == FLUID or ca == POROUS) and \
                        (cb == FLUID or cb == POROUS):
                    d_f = 0.5 * (dvy[i, j - 1, k] + dvy[i, j, k])
                    ubar = 0.5 * (v[i, j - 1, k] + v[i, j, k])
                    gp = 0.5 * (gy[i, j - 1, k] + gy[i, j, k])
                    corr = d_f / rho * ((p[i, j, k] - p[i, j - 1, k]) / dy
                                        - gp)
                    fy[i, j, k] = (ubar - corr) * ay_area
    for i in range(nx):
        for j in range(ny):
            for k in range(1, nz):
                ca = cls[i, j, k - 1]
                cb = cls[i, j, k]
                if (ca == FLUID or ca == POROUS) and \
                        (cb == FLUID or cb == POROUS):
                    d_f = 0.5 * (dwz[i, j, k - 1] + dwz[i, j, k])
                    ubar = 0.5 * (w[i, j, k - 1] + w[i, j, k])
                    gp = 0.5 * (gz[i, j, k - 1] + gz[i, j, k])
                    corr = d_f / rho * ((p[i, j, k] - p[i, j, k - 1]) / dz
                                        - gp)
                    fz[i, j, k] = (ubar - corr) * az_area


@njit(cache=True)
def pressure_system(cls, dux, dvy, dwz, fx, fy, fz, rho, dx, dy, dz,
                    ap, aw, ae, as_, an, ab, at, b, tx, ty, tz):
    """SPD pressure-correction coefficients and -div(F) right-hand side.

    Also stores the face transmissibilities t so the same factors correct
    the fluxes after the solve.  Only solved-solved faces couple; all
    boundary fluxes are treated as fixed (Neumann correction).
    """
    nx, ny, nz = cls.shape
    ax_area = dy * dz
    ay_area = dx * dz
    az_area = dx * dy
    tx[:] = 0.0
    ty[:] = 0.0
    tz[:] = 0.0
    for i in range(1, nx):
        for j in range(ny):
            for k in range(nz):
                ca = cls[i - 1, j, k]
                cb = cls[i, j, k]
                if (ca == FLUID or ca == POROUS) and \
                        (cb == FLUID or cb == POROUS):
                    tx[i, j, k] = 0.5 * (dux[i - 1, j, k] + dux[i, j, k]) \
                        * ax_area / (rho * dx)
    for i in range(nx):
        for j in range(1, ny):
            for k in range(nz):
                ca = cls[i, j - 1, k]
                cb = cls[i, j, k]
                if (ca == FLUID or ca == POROUS) and \
                        (cb == FLUID or cb == POROUS):
                    ty[i, j, k] = 0.5 * (dvy[i, j - 1, k] + dvy[i, j, k]) \
                        * ay_area / (rho * dy)
    for i in range(nx):
        for j in range(ny):
            for k in range(1, nz):
                ca = cls[i, j, k - 1]
                cb = cls[i, j, k]
                if (ca == FLUID or ca == POROUS) and \
                        (cb == FLUID or cb == POROUS):
                    tz[i, j, k] = 0.5 * (dwz[i, j, k - 1] + dwz[i, j, k]) \
                        * az_area / (rho * dz)
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                c = cls[i, j, k]
                if c != FLUID and c != POROUS:
                    ap[i, j, k] = 1.0
                    aw[i, j, k] = ae[i, j, k] = 0.0
                    as_[i, j, k] = an[i, j, k] = 0.0
                    ab[i, j, k] = at[i, j, k] = 0.0
                    b[i, j, k] = 0.0
                    continue
                cw_ = tx[i, j, k]
                ce = tx[i + 1, j, k] if i < nx - 1 else 0.0
                cs = ty[i, j, k]
                cn = ty[i, j + 1, k] if j < ny - 1 else 0.0
                cb_ = tz[i, j, k]
                ct = tz[i, j, k + 1] if k < nz - 1 else 0.0
                aw[i, j, k] = cw_
                ae[i, j, k] = ce
                as_[i, j, k] = cs
                an[i, j, k] = cn
                ab[i, j, k] = cb_
                at[i, j, k] = ct
                ap[i, j, k] = cw_ + ce + cs + cn + cb_ + ct
                div = (fx[i + 1, j, k] - fx[i, j, k]
                       + fy[i, j + 1, k] - fy[i, j, k]
                       + fz[i, j, k + 1] - fz[i, j, k])
                b[i, j, k] = -div


@njit(cache=True)
def correct_fluxes(tx, ty, tz, pc, fx, fy, fz):
    for i in range(1, tx.shape[0] - 1):
        for j in range(tx.shape[1]):
            for k in range(tx.shape[2]):
                if tx[i, j, k] != 0.0:
                    fx[i, j, k] -= tx[i, j, k] * (pc[i, j, k]
                                                  - pc[i - 1, j, k])
    for i in range(ty.shape[0]):
        for j in range(1, ty.shape[1] - 1):
            for k in range(ty.shape[2]):
                if ty[i, j, k] != 0.0:
                    fy[i, j, k] -= ty[i, j, k] * (pc[i, j, k]
                                                  - pc[i, j - 1, k])
    for i in range(tz.shape[0]):
        for j in range(tz.shape[1]):
            for k in range(1, tz.shape[2] - 1):
                if tz[i, j, k] != 0.0:
                    fz[i, j, k] -= tz[i, j, k] * (pc[i, j, k]
                                                  - pc[i, j, k - 1])


@njit(cache=True, fastmath=False)
def _grad3(f, cls, i, j, k, nx, ny, nz, dx, dy, dz):
    """Gradient of one field at one cell: central where both neighbors
    carry values (anything not solid), one-sided at mask boundaries."""
    fc = f[i, j, k]
    hp = i < nx - 1 and cls[i + 1, j, k] != SOLID
    hm = i > 0 and cls[i - 1, j, k] != SOLID
    if hp and hm:
        gx = (f[i + 1, j, k] - f[i - 1, j, k]) / (2 * dx)
    elif hp:
        gx = (f[i + 1, j, k] - fc) / dx
    elif hm:
        gx = (fc - f[i - 1, j, k]) / dx
    else:
        gx = 0.0
    hp = j < ny - 1 and cls[i, j + 1, k] != SOLID
    hm = j > 0 and cls[i, j - 1, k] != SOLID
    if hp and hm:
        gy = (f[i, j + 1, k] - f[i, j - 1, k]) / (2 * dy)
    elif hp:
        gy = (f[i, j + 1, k] - fc) / dy
    elif hm:
        gy = (fc - f[i, j - 1, k]) / dy
    else:
        gy = 0.0
    hp = k < nz - 1 and cls[i, j, k + 1] != SOLID
    hm = k > 0 and cls[i, j, k - 1] != SOLID
    if hp and hm:
        gz = (f[i, j, k + 1] - f[i, j, k - 1]) / (2 * dz)
    elif hp:
        gz = (f[i, j, k + 1] - fc) / dz
    elif hm:
        gz = (fc - f[i, j, k - 1]) / dz
    else:
        gz = 0.0
    return gx, gy, gz


@njit(cache=True)
def production_and_q(cls, u, v, w, nu_t, dx, dy, dz, pk, q_mag):
    """P_k = nu_t * 2 S_ij S_ij and |Q| in one pass over solved cells.

    Cells whose 6 neighbors are all in-bounds and non-solid take a
    branch-free central-difference path; the rest fall back to the
    one-sided mask-aware gradients.
    """
    nx, ny, nz = cls.shape
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                c = cls[i, j, k]
                if c != FLUID and c != POROUS:
                    pk[i, j, k] = 0.0
                    q_mag[i, j, k] = 0.0
                    continue
                interior = (0 < i < nx - 1 and 0 < j < ny - 1
                            and 0 < k < nz - 1)
                if interior:
                    interior = (cls[i - 1, j, k] != SOLID
                                and cls[i + 1, j, k] != SOLID
                                and cls[i, j - 1, k] != SOLID
                                and cls[i, j + 1, k] != SOLID
                                and cls[i, j, k - 1] != SOLID
                                and cls[i, j, k + 1] != SOLID)
                if interior:
                    uxx = (u[i + 1, j, k] - u[i - 1, j, k]) / (2 * dx)
                    uxy = (u[i, j + 1, k] - u[i, j - 1, k]) / (2 * dy)
                    uxz = (u[i, j, k + 1] - u[i, j, k - 1]) / (2 * dz)
                    vyx = (v[i + 1, j, k] - v[i - 1, j, k]) / (2 * dx)
                    vyy = (v[i, j + 1, k] - v[i, j - 1, k]) / (2 * dy)
                    vyz = (v[i, j, k + 1] - v[i, j, k - 1]) / (2 * dz)
                    wzx = (w[i + 1, j, k] - w[i - 1, j, k]) / (2 * dx)
                    wzy = (w[i, j + 1, k] - w[i, j - 1, k]) / (2 * dy)
                    wzz = (w[i, j, k + 1] - w[i, j, k - 1]) / (2 * dz)
                else:
                    uxx, uxy, uxz = _grad3(u, cls, i, j, k, nx, ny, nz,
                                           dx, dy, dz)
                    vyx, vyy, vyz = _grad3(v, cls, i, j, k, nx, ny, nz,
                                           dx, dy, dz)
                    wzx, wzy, wzz = _grad3(w, cls, i, j, k, nx, ny, nz,
                                           dx, dy, dz)
                s2 = (2.0 * (uxx * uxx + vyy * vyy + wzz * wzz)
                      + (uxy + vyx) ** 2 + (uxz + wzx) ** 2
                      + (vyz + wzy) ** 2)
                pk[i, j, k] = nu_t[i, j, k] * s2
                q = -0.5 * (uxx * uxx + vyy * vyy + wzz * wzz
                            + 2.0 * (uxy * vyx + uxz * wzx + vyz * wzy))
                q_mag[i, j, k] = abs(q)
