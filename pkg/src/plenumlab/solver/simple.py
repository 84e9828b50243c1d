"""Transient segregated solver: SIMPLE inner iterations on a collocated
grid with Rhie-Chow face fluxes, BDF2 time advancement, k-eps transport
with the optional structure-based dissipation source, Forchheimer porous
sinks, log-law wall functions, swirl inlets, and a mass-corrected outlet.
"""

from dataclasses import dataclass, field

import numpy as np

from ..geometry import CellClass, Domain
from ..probes import FlowDataset, build_sensor_planes, record_snapshot
from . import kernels
from .physics import (
    EPS_FLOOR,
    K_FLOOR,
    FlowState,
    FluidProps,
    PorousCoeffs,
    SwirlBC,
    TurbConstants,
    inlet_cell_velocities,
    inlet_turbulence,
)
from .pressure import PressureSolver

Y_PLUS_MIN = 11.06  # log-law validity clamp


class Diverged(RuntimeError):
    """Solver blow-up; carries the step, residual history, and any
    snapshots recorded before the failure."""

    def __init__(self, message, step, history, partial=None):
        super().__init__(message)
        self.step = step
        self.history = history
        self.partial = partial


@dataclass
class SolverParams:
    """Numerical knobs of the transient solver."""

    dt: float = 0.002  # [s]
    t_develop: float = 2.0  # [s] development window before recording
    t_end: float = 4.0  # [s]
    n_inner: int = 2  # desk-scale default; the reference protocol uses 5
    turbulence_model: str = "struct-eps"  # or "k-eps"
    urf_momentum: float = 0.7
    urf_pressure: float = 0.3
    urf_turbulence: float = 0.7
    momentum_tol: float = 1e-5
    momentum_max_sweeps: int = 30
    turb_tol: float = 1e-5
    turb_max_sweeps: int = 30
    pressure_rtol: float = 1e-6
    pressure_max_iter: int = 2000
    nu_t_ratio_max: float = 1e6
    blowup_threshold: float = 1e8

    def validate(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.n_inner < 1:
            raise ValueError("n_inner must be >= 1")
        if self.turbulence_model not in ("struct-eps", "k-eps"):
            raise ValueError("turbulence_model must be struct-eps or k-eps")
        if not (0 < self.urf_momentum <= 1 and 0 < self.urf_pressure <= 1
                and 0 < self.urf_turbulence <= 1):
            raise ValueError("under-relaxation factors must be in (0, 1]")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    @property
    def n_recorded(self) -> int:
        return max(int(round((self.t_end - self.t_develop) / self.dt)), 0)


@dataclass
class ResidualRow:
    step: int
    time: float
    res_u: float
    res_v: float
    res_w: float
    res_mass: float
    res_k: float
    res_eps: float

    def as_csv(self):
        return (f"{self.step},{self.time:.9g},{self.res_u:.6g},"
                f"{self.res_v:.6g},{self.res_w:.6g},{self.res_mass:.6g},"
                f"{self.res_k:.6g},{self.res_eps:.6g}")


def write_residual_csv(rows, path):
    with open(path, "w") as f:
        f.write("step,time,res_u,res_v,res_w,res_mass,res_k,res_eps\n")
        for row in rows:
            f.write(row.as_csv() + "\n")


class TransientSolver:
    """Owns one run: state arrays, coefficient workspaces, face fluxes."""

    def __init__(self, domain: Domain, props: FluidProps,
                 constants: TurbConstants, porous: PorousCoeffs,
                 params: SolverParams, swirl: SwirlBC | None = None,
                 inlet_cells=None, inlet_velocities=None,
                 inlet_k=None, inlet_eps=None):
        props.validate()
        constants.validate()
        porous.validate()
        params.validate()
        self.domain = domain
        self.props = props
        self.constants = constants
        self.porous = porous
        self.params = params
        self.cls = np.ascontiguousarray(domain.cell_class, dtype=np.uint8)
        self.solve_mask = np.isin(self.cls, (kernels.FLUID, kernels.POROUS)) \
            .astype(np.uint8)
        self.fluid_mask = self.cls == kernels.FLUID
        self.porous_mask = self.cls == kernels.POROUS
        shape = domain.shape
        self.shape = shape
        self.vol = domain.cell_volume
        self.state = FlowState.quiescent(shape)

        # inlet boundary: either a swirl BC on the domain patches or
        # explicit per-cell velocities (used by the column fixtures)
        if swirl is not None:
            swirl.validate()
            cells, vels = inlet_cell_velocities(domain, swirl)
            width = (2 * domain.inlet_patches[0].half_width
                     if domain.inlet_patches else 1.0)
            k_in, eps_in = inlet_turbulence(swirl, constants, width)
        else:
            cells = np.asarray(inlet_cells if inlet_cells is not None
                               else np.zeros((0, 3)), dtype=np.int64)
            vels = np.asarray(inlet_velocities if inlet_velocities is not None
                              else np.zeros((0, 3)))
            k_in = inlet_k if inlet_k is not None else K_FLOOR
            eps_in = inlet_eps if inlet_eps is not None else EPS_FLOOR
        self.inlet_cells = cells
        self.inlet_vels = vels
        self.k_in = max(k_in, K_FLOOR)
        self.eps_in = max(eps_in, EPS_FLOOR)
        self._init_state()
        self._build_boundary_faces()
        self._build_wall_geometry()

        self.pressure = PressureSolver(shape, rtol=params.pressure_rtol,
                                       max_iter=params.pressure_max_iter)
        self._por_f = self.porous_mask.astype(np.float64) \
            * self.vol / props.rho
        self._solve_f = self.solve_mask.astype(np.float64)
        self._solve_b = self.solve_mask.astype(bool)
        self._n_solved = int(self.solve_mask.sum())
        # coefficient workspaces
        self._a = [np.zeros(shape) for _ in range(7)]  # ap + 6 neighbors
        self._b = np.zeros(shape)
        self._res = np.zeros(shape)
        self._grad = [np.zeros(shape) for _ in range(3)]
        self._dv = [np.zeros(shape) for _ in range(3)]  # V/aP per component
        self._tx = np.zeros((shape[0] + 1, shape[1], shape[2]))
        self._ty = np.zeros((shape[0], shape[1] + 1, shape[2]))
        self._tz = np.zeros((shape[0], shape[1], shape[2] + 1))
        self._pk = np.zeros(shape)
        self._qmag = np.zeros(shape)
        self.history = []

    # ------------------------------------------------------------------
    # setup

    def _init_state(self):
        st = self.state
        st.k[:] = self.k_in
        st.eps[:] = self.eps_in
        if len(self.inlet_cells):
            ii, jj, kk = (self.inlet_cells[:, 0], self.inlet_cells[:, 1],
                          self.inlet_cells[:, 2])
            st.u[ii, jj, kk] = self.inlet_vels[:, 0]
            st.v[ii, jj, kk] = self.inlet_vels[:, 1]
            st.w[ii, jj, kk] = self.inlet_vels[:, 2]
        self._update_nu_t()
        st.u_prev1 = st.u.copy()
        st.v_prev1 = st.v.copy()
        st.w_prev1 = st.w.copy()
        st.u_prev2 = st.u.copy()
        st.v_prev2 = st.v.copy()
        st.w_prev2 = st.w.copy()
        nx, ny, nz = self.shape
        st.face_flux_x = np.zeros((nx + 1, ny, nz))
        st.face_flux_y = np.zeros((nx, ny + 1, nz))
        st.face_flux_z = np.zeros((nx, ny, nz + 1))

    def _face_area(self, axis):
        d = self.domain
        return (d.dy * d.dz, d.dx * d.dz, d.dx * d.dy)[axis]

    def _build_boundary_faces(self):
        """Index lists for inlet faces (fixed flux) and outlet faces
        (zero-gradient flux with global mass correction)."""
        cls = self.cls
        nx, ny, nz = self.shape
        inlet_faces = []  # (axis, fi, fj, fk, ci, cj, ck, outward)
        outlet_faces = []
        offsets = ((1, 0, 0), (0, 1, 0), (0, 0, 1))
        for axis, (oi, oj, ok) in enumerate(offsets):
            for i in range(nx + oi):
                for j in range(ny + oj):
                    for k in range(nz + ok):
                        # face between minus cell (i-oi.., only if in range)
                        mi, mj, mk = i - oi, j - oj, k - ok
                        pi, pj, pk = i, j, k
                        if (mi < 0 or mj < 0 or mk < 0 or pi >= nx
                                or pj >= ny or pk >= nz):
                            continue
                        ca = cls[mi, mj, mk]
                        cb = cls[pi, pj, pk]
                        a_solved = ca in (kernels.FLUID, kernels.POROUS)
                        b_solved = cb in (kernels.FLUID, kernels.POROUS)
                        if a_solved and cb == kernels.INLET:
                            inlet_faces.append((axis, i, j, k,
                                                pi, pj, pk, 1))
                        elif b_solved and ca == kernels.INLET:
                            inlet_faces.append((axis, i, j, k,
                                                mi, mj, mk, -1))
                        elif a_solved and cb == kernels.OUTLET:
                            outlet_faces.append((axis, i, j, k,
                                                 mi, mj, mk, 1))
                        elif b_solved and ca == kernels.OUTLET:
                            outlet_faces.append((axis, i, j, k,
                                                 pi, pj, pk, -1))
        self.inlet_faces = np.array(inlet_faces, dtype=np.int64).reshape(
            -1, 8)
        self.outlet_faces = np.array(outlet_faces, dtype=np.int64).reshape(
            -1, 8)
        # fixed inlet fluxes: face velocity = inlet-cell velocity
        st = self.state
        vel = (st.u, st.v, st.w)
        self._inflow_total = 0.0
        for axis, fi, fj, fk, ci, cj, ck, outward in self.inlet_faces:
            area = self._face_area(axis)
            f = vel[axis][ci, cj, ck] * area
            self._face_flux(axis)[fi, fj, fk] = f
            self._inflow_total += -outward * f
        # outlet ghost donors
        donors = {}
        for axis, fi, fj, fk, ci, cj, ck, outward in self.outlet_faces:
            step = np.zeros(3, dtype=np.int64)
            step[axis] = outward
            ghost = (ci + step[0], cj + step[1], ck + step[2])
            donors[ghost] = (ci, cj, ck)
        for i in range(nx):
            for j in range(ny):
                for k in range(nz):
                    if cls[i, j, k] == kernels.OUTLET and (i, j, k) not in donors:
                        for di, dj, dk in ((0, 0, -1), (0, 0, 1), (-1, 0, 0),
                                           (1, 0, 0), (0, -1, 0), (0, 1, 0)):
                            ni, nj, nk = i + di, j + dj, k + dk
                            if (0 <= ni < nx and 0 <= nj < ny
                                    and 0 <= nk < nz
                                    and self.solve_mask[ni, nj, nk]):
                                donors[(i, j, k)] = (ni, nj, nk)
                                break
        self._ghosts = np.array(list(donors.keys()),
                                dtype=np.int64).reshape(-1, 3)
        self._donors = np.array([donors[tuple(g)] for g in self._ghosts],
                                dtype=np.int64).reshape(-1, 3)

    def _build_wall_geometry(self):
        """Wall-face areas per normal axis for fluid cells (wall functions)
        and the wall distance used for the eps Dirichlet rows."""
        nx, ny, nz = self.shape
        cls = self.cls
        half = (self.domain.dx / 2, self.domain.dy / 2, self.domain.dz / 2)
        self.wall_area = [np.zeros(self.shape) for _ in range(3)]
        y_wall = np.full(self.shape, np.inf)
        offsets = ((1, 0, 0), (0, 1, 0), (0, 0, 1))
        for axis, (oi, oj, ok) in enumerate(offsets):
            area = self._face_area(axis)
            for i in range(nx):
                for j in range(ny):
                    for k in range(nz):
                        if cls[i, j, k] != kernels.FLUID:
                            continue
                        for sgn in (-1, 1):
                            ni, nj, nk = i + sgn * oi, j + sgn * oj, \
                                k + sgn * ok
                            outside = not (0 <= ni < nx and 0 <= nj < ny
                                           and 0 <= nk < nz)
                            if outside or cls[ni, nj, nk] == kernels.SOLID:
                                self.wall_area[axis][i, j, k] += area
                                y_wall[i, j, k] = min(y_wall[i, j, k],
                                                      half[axis])
        self.y_wall = y_wall
        self.eps_wall_mask = np.isfinite(y_wall) & self.fluid_mask
        self._has_wall = [bool(self.wall_area[a].any()) for a in range(3)]
        self._any_wall = any(self._has_wall)
        self._wall_coef = [None, None, None]

    # ------------------------------------------------------------------
    # pieces of one inner iteration

    def _face_flux(self, axis):
        st = self.state
        return (st.face_flux_x, st.face_flux_y, st.face_flux_z)[axis]

    def _update_nu_t(self):
        st = self.state
        cap = self.params.nu_t_ratio_max * self.props.nu
        st.nu_t = np.clip(
            self.constants.c_mu * st.k**2 / np.maximum(st.eps, EPS_FLOOR),
            0.0, cap)

    def _copy_ghosts(self):
        if not len(self._ghosts):
            return
        st = self.state
        gi, gj, gk = self._ghosts[:, 0], self._ghosts[:, 1], self._ghosts[:, 2]
        di, dj, dk = self._donors[:, 0], self._donors[:, 1], self._donors[:, 2]
        for f in (st.u, st.v, st.w, st.p, st.k, st.eps, st.nu_t):
            f[gi, gj, gk] = f[di, dj, dk]

    def _refresh_wall_coeffs(self):
        """Log-law sink coefficient per unit wall area [m/s], one array per
        wall-normal axis, reused across components within an iteration."""
        c = self.constants
        st = self.state
        u_star_k = c.c_mu**0.25 * np.sqrt(np.maximum(st.k, K_FLOOR))
        halves = (self.domain.dx / 2, self.domain.dy / 2, self.domain.dz / 2)
        self._wall_coef = []
        for axis in range(3):
            if not self._has_wall[axis]:
                self._wall_coef.append(None)
                continue
            y_plus = np.maximum(u_star_k * halves[axis] / self.props.nu,
                                Y_PLUS_MIN)
            self._wall_coef.append(u_star_k * c.kappa
                                   / np.log(c.wall_e * y_plus))

    def _solve_linear(self, x, tol, max_sweeps):
        ap, aw, ae, as_, an, ab, at = self._a
        b = self._b
        scale = np.linalg.norm(b[self._solve_b])
        if scale == 0.0:
            scale = 1.0
        r0 = kernels.residual(ap, aw, ae, as_, an, ab, at, b, x,
                              self.solve_mask, self._res) / scale
        sweeps = 0
        res = r0
        while res > tol and sweeps < max_sweeps:
            kernels.rb_sweep(ap, aw, ae, as_, an, ab, at, b, x,
                             self.solve_mask, 0)
            kernels.rb_sweep(ap, aw, ae, as_, an, ab, at, b, x,
                             self.solve_mask, 1)
            sweeps += 1
            if sweeps % 2 == 0 or sweeps >= max_sweeps:
                res = kernels.residual(ap, aw, ae, as_, an, ab, at, b, x,
                                       self.solve_mask, self._res) / scale
        return r0

    def _momentum_predict(self, bdf2):
        # coefficient rows of non-solved cells are never read by the
        # sweeps, so the extra terms below are added on the full arrays
        st = self.state
        p_ = self.params
        dom = self.domain
        vol = self.vol
        dt = p_.dt
        gamma = self.props.nu + st.nu_t
        kernels.cell_gradient(st.p, self.solve_mask, dom.dx, dom.dy, dom.dz,
                              *self._grad)
        alpha = (self.porous.alpha_lateral, self.porous.alpha_lateral,
                 self.porous.alpha_axial)
        beta = (self.porous.beta_lateral, self.porous.beta_lateral,
                self.porous.beta_axial)
        fields = (st.u, st.v, st.w)
        prev1 = (st.u_prev1, st.v_prev1, st.w_prev1)
        prev2 = (st.u_prev2, st.v_prev2, st.w_prev2)
        residuals = []
        self._refresh_wall_coeffs()
        ap, aw, ae, as_, an, ab, at = self._a
        relax = (1.0 - p_.urf_momentum) / p_.urf_momentum
        for comp in range(3):
            phi = fields[comp]
            kernels.assemble_transport(
                self.cls, st.face_flux_x, st.face_flux_y, st.face_flux_z,
                gamma, phi, phi, True, dom.dx, dom.dy, dom.dz,
                ap, aw, ae, as_, an, ab, at, self._b)
            b = self._b
            if bdf2:
                ap += 1.5 * vol / dt
                b += (2.0 * prev1[comp] - 0.5 * prev2[comp]) * (vol / dt)
            else:
                ap += vol / dt
                b += prev1[comp] * (vol / dt)
            # Forchheimer sink, implicit in the solved component
            ap += self._por_f * (alpha[comp] * np.abs(phi) + beta[comp])
            # log-law wall sink on tangential components of fluid cells
            for ax in range(3):
                if ax == comp or not self._has_wall[ax]:
                    continue
                ap += self._wall_coef[ax] * self.wall_area[ax]
            b -= self._grad[comp] * (vol / self.props.rho)
            # implicit under-relaxation
            b += relax * ap * phi
            ap *= 1.0 / p_.urf_momentum
            r0 = self._solve_linear(phi, p_.momentum_tol,
                                    p_.momentum_max_sweeps)
            residuals.append(r0)
            dv = self._dv[comp]
            np.divide(self._solve_f * vol, ap, out=dv)
        return residuals

    def _update_fluxes(self):
        st = self.state
        dom = self.domain
        kernels.cell_gradient(st.p, self.solve_mask, dom.dx, dom.dy, dom.dz,
                              *self._grad)
        kernels.rhie_chow_fluxes(
            self.cls, st.u, st.v, st.w, st.p, *self._grad, *self._dv,
            self.props.rho, dom.dx, dom.dy, dom.dz,
            st.face_flux_x, st.face_flux_y, st.face_flux_z)
        # outlet: zero-gradient face velocity, then global mass correction
        if len(self.outlet_faces):
            vel = (st.u, st.v, st.w)
            raw = np.empty(len(self.outlet_faces))
            areas = np.empty(len(self.outlet_faces))
            for n, (axis, fi, fj, fk, ci, cj, ck, outward) in enumerate(
                    self.outlet_faces):
                areas[n] = self._face_area(axis)
                raw[n] = vel[axis][ci, cj, ck] * areas[n] * outward
            q_in = self._inflow_total
            q_raw = raw.sum()
            if q_raw > 1e-12 * max(abs(q_in), 1.0):
                out = raw * (q_in / q_raw)
            else:
                out = np.full_like(raw, q_in / areas.sum()) * areas
            for n, (axis, fi, fj, fk, ci, cj, ck, outward) in enumerate(
                    self.outlet_faces):
                self._face_flux(axis)[fi, fj, fk] = out[n] * outward

    def _pressure_correct(self):
        st = self.state
        dom = self.domain
        p_ = self.params
        ap, aw, ae, as_, an, ab, at = self._a
        kernels.pressure_system(
            self.cls, *self._dv, st.face_flux_x, st.face_flux_y,
            st.face_flux_z, self.props.rho, dom.dx, dom.dy, dom.dz,
            ap, aw, ae, as_, an, ab, at, self._b,
            self._tx, self._ty, self._tz)
        mass_res = float(np.abs(self._b * self._solve_f).sum())
        self.pressure.update_coefficients(ap, aw, ae, as_, an, ab, at,
                                          self.solve_mask)
        pc, _, ok = self.pressure.solve(self._b)
        if not ok:
            raise Diverged("pressure solver stalled", self.state.step,
                           list(self.history))
        st.p += p_.urf_pressure * pc  # pc is zero at non-solved cells
        st.p -= float((st.p * self._solve_f).sum()) / self._n_solved
        kernels.cell_gradient(pc, self.solve_mask, dom.dx, dom.dy, dom.dz,
                              *self._grad)
        for comp, f in enumerate((st.u, st.v, st.w)):
            f -= self._dv[comp] * self._grad[comp] * (1.0 / self.props.rho)
        kernels.correct_fluxes(self._tx, self._ty, self._tz, pc,
                               st.face_flux_x, st.face_flux_y,
                               st.face_flux_z)
        return mass_res

    def _turbulence_update(self, struct: bool):
        st = self.state
        p_ = self.params
        c = self.constants
        dom = self.domain
        vol = self.vol
        dt = p_.dt
        kernels.production_and_q(self.cls, st.u, st.v, st.w, st.nu_t,
                                 dom.dx, dom.dy, dom.dz, self._pk,
                                 self._qmag)
        pk = self._pk
        # wall-shear production at wall-adjacent fluid cells
        for ax in range(3):
            if not self._has_wall[ax]:
                continue
            ut2 = sum((st.u, st.v, st.w)[i] ** 2 for i in range(3)
                      if i != ax)
            pk += self._wall_coef[ax] * self.wall_area[ax] * ut2 / vol
        k_old = np.maximum(st.k, K_FLOOR)
        eps_old = np.maximum(st.eps, EPS_FLOOR)
        decay = eps_old / k_old
        relax = (1 - p_.urf_turbulence) / p_.urf_turbulence
        ap, aw, ae, as_, an, ab, at = self._a

        # k equation
        gamma_k = self.props.nu + st.nu_t / c.sigma_k
        kernels.assemble_transport(
            self.cls, st.face_flux_x, st.face_flux_y, st.face_flux_z,
            gamma_k, st.k, st.k, False, dom.dx, dom.dy, dom.dz,
            ap, aw, ae, as_, an, ab, at, self._b)
        b = self._b
        ap += vol / dt + decay * vol
        b += k_old * (vol / dt) + pk * vol
        b += relax * ap * st.k
        ap *= 1.0 / p_.urf_turbulence
        res_k = self._solve_linear(st.k, p_.turb_tol, p_.turb_max_sweeps)
        np.maximum(st.k, K_FLOOR, out=st.k)

        # eps equation
        gamma_e = self.props.nu + st.nu_t / c.sigma_eps_effective
        kernels.assemble_transport(
            self.cls, st.face_flux_x, st.face_flux_y, st.face_flux_z,
            gamma_e, st.eps, st.eps, False, dom.dx, dom.dy, dom.dz,
            ap, aw, ae, as_, an, ab, at, self._b)
        b = self._b
        ap += vol / dt + c.c_eps2 * decay * vol
        b += eps_old * (vol / dt) + c.c_eps1 * decay * pk * vol
        if struct and c.c_eps3 != 0.0:
            b += c.c_eps3 * k_old * self._qmag * vol
        b += relax * ap * st.eps
        ap *= 1.0 / p_.urf_turbulence
        # equilibrium Dirichlet rows at wall-adjacent fluid cells
        wallm = self.eps_wall_mask
        if self._any_wall:
            eps_wall = (c.c_mu**0.75 * np.maximum(st.k, K_FLOOR)**1.5
                        / (c.kappa * np.where(wallm, self.y_wall, 1.0)))
            ap[wallm] = 1.0
            b[wallm] = eps_wall[wallm]
            for arr in (aw, ae, as_, an, ab, at):
                arr[wallm] = 0.0
        res_eps = self._solve_linear(st.eps, p_.turb_tol,
                                     p_.turb_max_sweeps)
        np.maximum(st.eps, EPS_FLOOR, out=st.eps)
        self._update_nu_t()
        return res_k, res_eps

    # ------------------------------------------------------------------
    # public stepping

    def advance_timestep(self, dt=None, n_inner=None) -> FlowState:
        """March one time step with n_inner SIMPLE iterations."""
        p_ = self.params
        if dt is not None and dt != p_.dt:
            p_.dt = dt
        n_inner = n_inner or p_.n_inner
        st = self.state
        struct = p_.turbulence_model == "struct-eps"
        bdf2 = st.step >= 2
        # shift time levels
        st.u_prev2, st.u_prev1 = st.u_prev1, st.u.copy()
        st.v_prev2, st.v_prev1 = st.v_prev1, st.v.copy()
        st.w_prev2, st.w_prev1 = st.w_prev1, st.w.copy()
        row = None
        for _ in range(n_inner):
            res_uvw = self._momentum_predict(bdf2)
            self._copy_ghosts()
            self._update_fluxes()
            mass = self._pressure_correct()
            self._copy_ghosts()
            res_k, res_eps = self._turbulence_update(struct)
            self._copy_ghosts()
            mass_scale = max(abs(self._inflow_total), 1e-30)
            row = ResidualRow(step=st.step + 1, time=st.t + p_.dt,
                              res_u=res_uvw[0], res_v=res_uvw[1],
                              res_w=res_uvw[2], res_mass=mass / mass_scale,
                              res_k=res_k, res_eps=res_eps)
            self._check_finite(row)
        st.step += 1
        st.t = st.step * p_.dt
        self.history.append(row)
        return st

    def _check_finite(self, row):
        st = self.state
        vals = (row.res_u, row.res_v, row.res_w, row.res_mass,
                row.res_k, row.res_eps)
        bad = any(not np.isfinite(v) or v > self.params.blowup_threshold
                  for v in vals)
        if not bad:
            for f in (st.u, st.v, st.w, st.p, st.k, st.eps):
                if not np.isfinite(f[self.solve_mask.astype(bool)]).all():
                    bad = True
                    break
        if bad:
            raise Diverged(
                f"solution diverged at step {st.step + 1}: residuals {vals}",
                st.step + 1, list(self.history) + [row])

    def mass_imbalance(self) -> float:
        """|inlet - outlet| / inlet from the current face fluxes."""
        out = 0.0
        st = self.state
        for axis, fi, fj, fk, ci, cj, ck, outward in self.outlet_faces:
            out += self._face_flux(axis)[fi, fj, fk] * outward
        q_in = self._inflow_total
        if q_in == 0.0:
            return abs(out)
        return abs(q_in - out) / abs(q_in)


def run_transient(domain: Domain, props: FluidProps, constants: TurbConstants,
                  porous: PorousCoeffs, swirl: SwirlBC, params: SolverParams,
                  fidelity_label: str = "", provenance: dict | None = None,
                  residual_rows: list | None = None, progress=None,
                  planes=None):
    """Simulate [0, t_end], recording assembly snapshots every step inside
    the window (t_develop, t_end].  Returns (final state, dataset).

    On divergence the recorded snapshots are attached to the raised
    Diverged error as a partial dataset.
    """
    if params.t_develop > params.t_end:
        raise ValueError("recording window must lie within the run")
    solver = TransientSolver(domain, props, constants, porous, params,
                             swirl=swirl)
    if planes is None:
        planes = build_sensor_planes(domain)
    snapshots = []
    times = []

    def build_dataset():
        t0 = times[0] if times else 0.0
        values = (np.stack(snapshots) if snapshots
                  else np.zeros((0, len(planes.k_faces), 15, 15),
                                dtype=np.float32))
        return FlowDataset(values=values, geom_mask=domain.assembly_map.valid,
                           t0=t0, dt_record=params.dt,
                           fidelity_label=fidelity_label,
                           provenance=provenance or {})

    n_steps = params.n_steps
    record_after = params.t_develop + 0.5 * params.dt
    try:
        for step in range(n_steps):
            st = solver.advance_timestep()
            if st.t > record_after - params.dt * 1e-6:
                snapshots.append(record_snapshot(st, planes, props))
                times.append(st.t)
            if residual_rows is not None and solver.history:
                residual_rows.append(solver.history[-1])
            if progress is not None:
                progress(step + 1, n_steps, solver.history[-1])
    except Diverged as err:
        err.partial = build_dataset()
        raise
    return solver.state, build_dataset()
