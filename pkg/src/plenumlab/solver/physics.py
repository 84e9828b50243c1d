"""Physical models of the transient solver: fluid/turbulence constants,
swirl inlet profile, Forchheimer porous resistance, velocity-gradient
invariants, and the k/eps source terms.
"""

from dataclasses import dataclass, field

import numpy as np

from ..geometry import CellClass, Domain

K_FLOOR = 1e-10  # [m^2/s^2]
EPS_FLOOR = 1e-12  # [m^2/s^3]


@dataclass
class FluidProps:
    """Constant-property coolant at 292 C / 15.5 MPa."""

    rho: float = 742.0  # [kg/m^3]
    nu: float = 1.25e-7  # [m^2/s]

    def validate(self):
        if self.rho <= 0 or self.nu <= 0:
            raise ValueError("rho and nu must be positive")


@dataclass
class TurbConstants:
    """k-eps closure constants; c_eps3 = 0 recovers the standard model."""

    c_mu: float = 0.09
    sigma_k: float = 1.0
    sigma_eps: float = 1.3
    c_eps1: float = 1.44
    c_eps2: float = 1.92
    c_eps3: float = 0.8
    kappa: float = 0.41  # wall log-law
    wall_e: float = 9.8
    # dissipation-equation diffusion coefficient: "sigma_eps" (consistent
    # with the k equation) or "sigma_k" (as sometimes printed)
    eps_diffusion: str = "sigma_eps"

    def validate(self):
        positive = (self.c_mu, self.sigma_k, self.sigma_eps, self.c_eps1,
                    self.c_eps2, self.kappa, self.wall_e)
        if any(v <= 0 for v in positive) or self.c_eps3 < 0:
            raise ValueError("turbulence constants out of range")
        if self.eps_diffusion not in ("sigma_eps", "sigma_k"):
            raise ValueError("eps_diffusion must be sigma_eps or sigma_k")

    @property
    def sigma_eps_effective(self) -> float:
        return (self.sigma_eps if self.eps_diffusion == "sigma_eps"
                else self.sigma_k)


@dataclass
class PorousCoeffs:
    """Forchheimer resistances fit to fuel-assembly pressure-drop data."""

    alpha_axial: float = 5949.0  # [kg/m^4]
    beta_axial: float = 2428.0  # [kg/(m^3 s)]
    alpha_lateral: float = 30061.4
    beta_lateral: float = 0.0

    def validate(self):
        if min(self.alpha_axial, self.beta_axial, self.alpha_lateral,
               self.beta_lateral) < 0:
            raise ValueError("porous resistances must be non-negative")


def forchheimer_resistance(v: float, direction: str,
                           coeffs: PorousCoeffs):
    """Pressure-gradient magnitude (alpha_i |v_i| + beta_i) v_i [Pa/m]."""
    if direction == "axial":
        alpha, beta = coeffs.alpha_axial, coeffs.beta_axial
    elif direction == "lateral":
        alpha, beta = coeffs.alpha_lateral, coeffs.beta_lateral
    else:
        raise ValueError("direction must be axial or lateral")
    v = np.asarray(v, dtype=np.float64)
    out = (alpha * np.abs(v) + beta) * v
    return float(out) if out.ndim == 0 else out


@dataclass
class SwirlBC:
    """Cold-leg swirl boundary: tangential/axial ratio alpha_s.

    patches carry the geometry (centers and in-patch axes); patch_scales
    multiply the axial speed per patch (all 1.0 for the nominal four-loop
    condition).
    """

    alpha_s: float  # tangential-to-axial velocity ratio
    u_axial: float  # [m/s]
    eps_reg: float  # [m^2] singularity regularizer
    patches: list = field(default_factory=list)
    patch_scales: tuple = (1.0, 1.0, 1.0, 1.0)
    turb_intensity: float = 0.05
    mixing_length_factor: float = 0.07  # of the patch width

    def validate(self):
        if self.eps_reg <= 0:
            raise ValueError("eps_reg must be positive")
        if self.u_axial < 0:
            raise ValueError("u_axial must be non-negative")


def default_eps_reg(patch_half_width: float) -> float:
    return (0.01 * patch_half_width) ** 2


def axial_speed_from_mass_flow(mdot_total: float, rho: float,
                               n_patches: int, patch_area: float) -> float:
    return mdot_total / (rho * n_patches * patch_area)


def swirl_inlet_velocity(x, y, bc: SwirlBC):
    """Patch-local inlet velocity [Ux, Uy, Uz].

    (x, y) are in-patch coordinates with origin at the patch center; Uz is
    the axial (into-domain) component.  The regularizer removes the axis
    singularity: U = [-a*u*y/sqrt(x^2+y^2+eps), a*u*x/sqrt(...), u].
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    denom = np.sqrt(x * x + y * y + bc.eps_reg)
    ux = -bc.alpha_s * bc.u_axial * y / denom
    uy = bc.alpha_s * bc.u_axial * x / denom
    uz = np.broadcast_to(np.float64(bc.u_axial), ux.shape)
    if ux.ndim == 0:
        return float(ux), float(uy), float(bc.u_axial)
    return ux, uy, uz.copy()


def inlet_cell_velocities(domain: Domain, bc: SwirlBC):
    """(cells, velocities) for every inlet cell, in the domain frame."""
    all_cells = []
    all_vels = []
    for p_i, patch in enumerate(domain.inlet_patches):
        scale = bc.patch_scales[p_i] if p_i < len(bc.patch_scales) else 1.0
        local_bc = SwirlBC(alpha_s=bc.alpha_s, u_axial=bc.u_axial * scale,
                           eps_reg=bc.eps_reg)
        centers = (patch.cells + 0.5) * np.array(
            [domain.dx, domain.dy, domain.dz])
        rel = centers - patch.center
        lx = rel @ patch.e1
        ly = rel @ patch.e2
        ux, uy, uz = swirl_inlet_velocity(lx, ly, local_bc)
        vel = (np.outer(ux, patch.e1) + np.outer(uy, patch.e2)
               + np.outer(uz, patch.normal))
        all_cells.append(patch.cells)
        all_vels.append(vel)
    if not all_cells:
        return (np.zeros((0, 3), dtype=np.int64), np.zeros((0, 3)))
    return np.concatenate(all_cells), np.concatenate(all_vels)


def inlet_turbulence(bc: SwirlBC, constants: TurbConstants,
                     patch_width: float):
    """(k, eps) inlet values from intensity and mixing length."""
    k_in = max(1.5 * (bc.turb_intensity * bc.u_axial) ** 2, K_FLOOR)
    length = max(bc.mixing_length_factor * patch_width, 1e-12)
    eps_in = max(constants.c_mu**0.75 * k_in**1.5 / length, EPS_FLOOR)
    return k_in, eps_in


@dataclass
class FlowState:
    """Collocated fields at the current step plus two prior time levels."""

    u: np.ndarray
    v: np.ndarray
    w: np.ndarray
    p: np.ndarray
    k: np.ndarray
    eps: np.ndarray
    nu_t: np.ndarray
    t: float = 0.0
    step: int = 0
    u_prev1: np.ndarray | None = None  # time level n-1
    v_prev1: np.ndarray | None = None
    w_prev1: np.ndarray | None = None
    u_prev2: np.ndarray | None = None  # time level n-2
    v_prev2: np.ndarray | None = None
    w_prev2: np.ndarray | None = None
    face_flux_x: np.ndarray | None = None  # [m^3/s] volume fluxes
    face_flux_y: np.ndarray | None = None
    face_flux_z: np.ndarray | None = None

    @classmethod
    def quiescent(cls, shape, k0: float = K_FLOOR, eps0: float = EPS_FLOOR):
        zeros = lambda: np.zeros(shape, dtype=np.float64)
        return cls(u=zeros(), v=zeros(), w=zeros(), p=zeros(),
                   k=np.full(shape, max(k0, K_FLOOR)),
                   eps=np.full(shape, max(eps0, EPS_FLOOR)),
                   nu_t=zeros())


@dataclass
class StructDiagnostics:
    """Structure-based resolution diagnostics of the velocity field."""

    Q: np.ndarray  # [1/s^2] second invariant of the velocity gradient
    Pi_mag: np.ndarray  # [1/s^2] |Q|
    tau_r: np.ndarray  # [s] resolved time scale, inf where |Q| = 0
    tau_m: np.ndarray  # [s] modeled time scale k/eps
    alpha_ratio: np.ndarray  # tau_r / tau_m


def masked_gradient(f, active, spacing, axis):
    """d f / d axis with central differences where both neighbors are
    active, one-sided at mask boundaries, zero where isolated."""
    f = np.asarray(f, dtype=np.float64)
    fp = np.zeros_like(f)
    fm = np.zeros_like(f)
    ap = np.zeros(f.shape, dtype=bool)
    am = np.zeros(f.shape, dtype=bool)
    src_p = [slice(None)] * 3
    dst_p = [slice(None)] * 3
    src_p[axis] = slice(1, None)
    dst_p[axis] = slice(None, -1)
    fp[tuple(dst_p)] = f[tuple(src_p)]
    ap[tuple(dst_p)] = active[tuple(src_p)]
    fm[tuple(src_p)] = f[tuple(dst_p)]
    am[tuple(src_p)] = active[tuple(dst_p)]
    d = spacing
    grad = np.where(
        ap & am, (fp - fm) / (2 * d),
        np.where(ap, (fp - f) / d, np.where(am, (f - fm) / d, 0.0)))
    return np.where(active, grad, 0.0)


def velocity_gradient_invariants(state: FlowState, domain: Domain,
                                 constants: TurbConstants | None = None
                                 ) -> StructDiagnostics:
    """Q = -1/2 A_ij A_ji of the resolved velocity gradient, the resolved
    and modeled time scales, and their ratio."""
    constants = constants or TurbConstants()
    active = np.isin(domain.cell_class,
                     (CellClass.FLUID, CellClass.POROUS, CellClass.INLET,
                      CellClass.OUTLET))
    spacing = (domain.dx, domain.dy, domain.dz)
    grads = np.empty((3, 3) + state.u.shape)
    for i, f in enumerate((state.u, state.v, state.w)):
        for j in range(3):
            grads[i, j] = masked_gradient(f, active, spacing[j], j)
    q = -0.5 * (grads[0, 0] ** 2 + grads[1, 1] ** 2 + grads[2, 2] ** 2
                + 2.0 * (grads[0, 1] * grads[1, 0]
                         + grads[0, 2] * grads[2, 0]
                         + grads[1, 2] * grads[2, 1]))
    pi_mag = np.abs(q)
    with np.errstate(divide="ignore"):
        tau_r = np.where(pi_mag > 0, pi_mag**-0.5, np.inf)
    eps_f = np.maximum(state.eps, EPS_FLOOR)
    tau_m = np.maximum(state.k, K_FLOOR) / eps_f
    alpha = tau_r / tau_m
    return StructDiagnostics(Q=q, Pi_mag=pi_mag, tau_r=tau_r, tau_m=tau_m,
                             alpha_ratio=alpha)


def turbulence_sources(state: FlowState, diagnostics, constants: TurbConstants,
                       domain: Domain | None = None, production=None):
    """Volumetric source fields of the k and eps transport equations.

    k source = P_k - eps; eps source = c_eps1 (eps/k) P_k - c_eps2 eps^2/k
    plus c_eps3 k |Pi| when structure-based dissipation is enabled
    (diagnostics given and c_eps3 > 0).
    """
    k = np.maximum(state.k, K_FLOOR)
    eps = np.maximum(state.eps, EPS_FLOOR)
    if production is None:
        if domain is None:
            raise ValueError("need domain or a precomputed production field")
        production = eddy_production(state, domain)
    k_src = production - eps
    eps_src = (constants.c_eps1 * eps / k * production
               - constants.c_eps2 * eps**2 / k)
    if diagnostics is not None and constants.c_eps3 != 0.0:
        eps_src = eps_src + constants.c_eps3 * k * diagnostics.Pi_mag
    return k_src, eps_src


def eddy_production(state: FlowState, domain: Domain):
    """P_k = nu_t * 2 S_ij S_ij from the resolved strain rate."""
    active = np.isin(domain.cell_class,
                     (CellClass.FLUID, CellClass.POROUS, CellClass.INLET,
                      CellClass.OUTLET))
    spacing = (domain.dx, domain.dy, domain.dz)
    g = np.empty((3, 3) + state.u.shape)
    for i, f in enumerate((state.u, state.v, state.w)):
        for j in range(3):
            g[i, j] = masked_gradient(f, active, spacing[j], j)
    s2 = (2.0 * (g[0, 0] ** 2 + g[1, 1] ** 2 + g[2, 2] ** 2)
          + (g[0, 1] + g[1, 0]) ** 2 + (g[0, 2] + g[2, 0]) ** 2
          + (g[1, 2] + g[2, 1]) ** 2)
    return state.nu_t * s2
