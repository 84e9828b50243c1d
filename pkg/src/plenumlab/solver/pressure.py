"""Pressure-correction linear solver: CG preconditioned by a cell-centered
Galerkin multigrid cycle.

The correction system is pure-Neumann (all boundary fluxes fixed), so the
constant null space is deflated inside the iteration.  Piecewise-constant
transfer keeps every coarse operator a 7-point stencil; the resulting
energy loss is compensated by over-correcting the coarse update.  The
smoother is symmetric Gauss-Seidel (forward sweeps before coarsening,
backward after) so the cycle is a valid SPD preconditioner.  The
preconditioner runs in float32; the outer CG runs in float64 and owns the
1e-6 relative tolerance.
"""

import numpy as np
from numba import njit

from .kernels import gs_sweep


@njit(cache=True)
def _coarsen(diag, aw, ae, as_, an, ab, at, active,
             diag_c, aw_c, ae_c, as_c, an_c, ab_c, at_c, active_c):
    nx, ny, nz = diag.shape
    diag_c[:] = 0.0
    aw_c[:] = 0.0
    ae_c[:] = 0.0
    as_c[:] = 0.0
    an_c[:] = 0.0
    ab_c[:] = 0.0
    at_c[:] = 0.0
    active_c[:] = 0
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                if active[i, j, k] == 0:
                    continue
                ci, cj, ck = i // 2, j // 2, k // 2
                active_c[ci, cj, ck] = 1
                diag_c[ci, cj, ck] += diag[i, j, k]
                c = aw[i, j, k]
                if c != 0.0:
                    if (i - 1) // 2 == ci:
                        diag_c[ci, cj, ck] -= c
                    else:
                        aw_c[ci, cj, ck] += c
                c = ae[i, j, k]
                if c != 0.0:
                    if (i + 1) // 2 == ci:
                        diag_c[ci, cj, ck] -= c
                    else:
                        ae_c[ci, cj, ck] += c
                c = as_[i, j, k]
                if c != 0.0:
                    if (j - 1) // 2 == cj:
                        diag_c[ci, cj, ck] -= c
                    else:
                        as_c[ci, cj, ck] += c
                c = an[i, j, k]
                if c != 0.0:
                    if (j + 1) // 2 == cj:
                        diag_c[ci, cj, ck] -= c
                    else:
                        an_c[ci, cj, ck] += c
                c = ab[i, j, k]
                if c != 0.0:
                    if (k - 1) // 2 == ck:
                        diag_c[ci, cj, ck] -= c
                    else:
                        ab_c[ci, cj, ck] += c
                c = at[i, j, k]
                if c != 0.0:
                    if (k + 1) // 2 == ck:
                        diag_c[ci, cj, ck] -= c
                    else:
                        at_c[ci, cj, ck] += c


@njit(cache=True)
def _gs_block(ap, aw, ae, as_, an, ab, at, b, x, active, n_sweeps, mode):
    """n lexicographic Gauss-Seidel sweeps in one call.

    mode 0: all forward (pre-smoothing), 1: all backward (post-smoothing,
    the transpose, keeping the cycle symmetric), 2: alternating
    forward/backward pairs (coarsest-level solve).
    """
    for s in range(n_sweeps):
        if mode == 0:
            backward = False
        elif mode == 1:
            backward = True
        else:
            backward = s % 2 == 1
        gs_sweep(ap, aw, ae, as_, an, ab, at, b, x, active, backward)


@njit(cache=True)
def _descend(ap, aw, ae, as_, an, ab, at, b, x, active, coarse_b):
    """Residual of the current iterate restricted onto the coarse level."""
    nx, ny, nz = x.shape
    coarse_b[:] = 0.0
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                if active[i, j, k] == 0:
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
                coarse_b[i // 2, j // 2, k // 2] += s


@njit(cache=True)
def _prolong_add(coarse, active, scale, fine):
    nx, ny, nz = fine.shape
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                if active[i, j, k]:
                    fine[i, j, k] += scale * coarse[i // 2, j // 2, k // 2]


@njit(cache=True)
def _matvec(ap, aw, ae, as_, an, ab, at, x, solve, out):
    nx, ny, nz = x.shape
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                if solve[i, j, k] == 0:
                    out[i, j, k] = 0.0
                    continue
                s = ap[i, j, k] * x[i, j, k]
                if i > 0:
                    s -= aw[i, j, k] * x[i - 1, j, k]
                if i < nx - 1:
                    s -= ae[i, j, k] * x[i + 1, j, k]
                if j > 0:
                    s -= as_[i, j, k] * x[i, j - 1, k]
                if j < ny - 1:
                    s -= an[i, j, k] * x[i, j + 1, k]
                if k > 0:
                    s -= ab[i, j, k] * x[i, j, k - 1]
                if k < nz - 1:
                    s -= at[i, j, k] * x[i, j, k + 1]
                out[i, j, k] = s
    return 0


class _Level:
    def __init__(self, shape, dtype=np.float32):
        self.shape = shape
        self.diag = np.zeros(shape, dtype)
        self.aw = np.zeros(shape, dtype)
        self.ae = np.zeros(shape, dtype)
        self.as_ = np.zeros(shape, dtype)
        self.an = np.zeros(shape, dtype)
        self.ab = np.zeros(shape, dtype)
        self.at = np.zeros(shape, dtype)
        self.active = np.zeros(shape, dtype=np.uint8)
        self.x = np.zeros(shape, dtype)
        self.b = np.zeros(shape, dtype)
        self.r = np.zeros(shape, dtype)

    @property
    def coeffs(self):
        return (self.diag, self.aw, self.ae, self.as_, self.an, self.ab,
                self.at)


class PressureSolver:
    """Reusable MG-CG solver bound to one grid topology."""

    def __init__(self, shape, rtol=1e-6, max_iter=2000, pre_sweeps=2,
                 post_sweeps=2, coarse_sweeps=40, min_cells=64,
                 over_correction=1.7, w_cycle=True):
        self.rtol = rtol
        self.max_iter = max_iter
        self.pre_sweeps = pre_sweeps
        self.post_sweeps = post_sweeps
        self.coarse_sweeps = coarse_sweeps
        self.over_correction = over_correction
        self.w_cycle = w_cycle
        self.levels = [_Level(shape)]
        while int(np.prod(self.levels[-1].shape)) > min_cells:
            nx, ny, nz = self.levels[-1].shape
            nxt = ((nx + 1) // 2, (ny + 1) // 2, (nz + 1) // 2)
            if nxt == self.levels[-1].shape:
                break
            self.levels.append(_Level(nxt))
        self._a64 = None
        self.iterations = 0

    def update_coefficients(self, ap, aw, ae, as_, an, ab, at, active):
        self._a64 = tuple(np.array(a, dtype=np.float64, copy=True)
                          for a in (ap, aw, ae, as_, an, ab, at))
        lv0 = self.levels[0]
        lv0.diag[:] = ap
        lv0.aw[:] = aw
        lv0.ae[:] = ae
        lv0.as_[:] = as_
        lv0.an[:] = an
        lv0.ab[:] = ab
        lv0.at[:] = at
        lv0.active[:] = active
        for fine, coarse in zip(self.levels[:-1], self.levels[1:]):
            _coarsen(*fine.coeffs, fine.active, *coarse.coeffs, coarse.active)

    def _cycle(self, depth):
        lv = self.levels[depth]
        if depth == len(self.levels) - 1:
            _gs_block(*lv.coeffs, lv.b, lv.x, lv.active,
                      self.coarse_sweeps, 2)
            return
        _gs_block(*lv.coeffs, lv.b, lv.x, lv.active, self.pre_sweeps, 0)
        nxt = self.levels[depth + 1]
        _descend(*lv.coeffs, lv.b, lv.x, lv.active, nxt.b)
        nxt.x[:] = 0.0
        self._cycle(depth + 1)
        if self.w_cycle and depth + 2 < len(self.levels):
            self._cycle(depth + 1)
        _prolong_add(nxt.x, lv.active, np.float32(self.over_correction),
                     lv.x)
        _gs_block(*lv.coeffs, lv.b, lv.x, lv.active, self.post_sweeps, 1)

    def precondition(self, r, out):
        lv0 = self.levels[0]
        lv0.b[:] = r
        lv0.x[:] = 0.0
        self._cycle(0)
        out[:] = lv0.x

    def solve(self, rhs, x=None):
        """CG on the float64 coefficients; returns (x, iterations, ok)."""
        lv0 = self.levels[0]
        active = lv0.active.astype(bool)
        mask = lv0.active
        n_active = int(active.sum())
        if n_active == 0:
            return np.zeros(lv0.shape), 0, True
        b = np.asarray(rhs, dtype=np.float64).copy()
        b[~active] = 0.0
        b[active] -= b[active].mean()  # compatibility for the Neumann system
        bnorm = np.linalg.norm(b)
        x = np.zeros(lv0.shape) if x is None else x
        if bnorm == 0.0:
            return x * 0.0, 0, True
        a64 = self._a64
        r = b.copy()
        z = np.empty_like(r)
        q = np.empty_like(r)
        self.precondition(r, z)
        z[active] -= z[active].mean()
        p = z.copy()
        rz = float((r * z).sum())
        for it in range(1, self.max_iter + 1):
            _matvec(*a64, p, mask, q)
            denom = float((p * q).sum())
            if denom <= 0.0:
                break
            alpha = rz / denom
            x += alpha * p
            r -= alpha * q
            rnorm = np.linalg.norm(r)
            if rnorm <= self.rtol * bnorm:
                self.iterations = it
                return x, it, True
            self.precondition(r, z)
            z[active] -= z[active].mean()
            rz_new = float((r * z).sum())
            p = z + (rz_new / rz) * p
            rz = rz_new
        self.iterations = self.max_iter
        return x, self.max_iter, False
