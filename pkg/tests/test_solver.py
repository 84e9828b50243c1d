import numpy as np
import pytest

from conftest import make_column_domain
from plenumlab.geometry import CellClass, DomainConfig, build_domain
from plenumlab.solver import (
    EPS_FLOOR,
    K_FLOOR,
    FlowState,
    FluidProps,
    PorousCoeffs,
    SolverParams,
    SwirlBC,
    TransientSolver,
    TurbConstants,
    axial_speed_from_mass_flow,
    default_eps_reg,
    forchheimer_resistance,
    inlet_cell_velocities,
    run_transient,
    swirl_inlet_velocity,
    turbulence_sources,
    velocity_gradient_invariants,
)
from steam_oracle import iapws_viscosity, if97_region1_density


# --- swirl boundary ---------------------------------------------------------

def test_swirl_zero_alpha_is_pure_axial():
    bc = SwirlBC(alpha_s=0.0, u_axial=15.0, eps_reg=1e-6)
    ux, uy, uz = swirl_inlet_velocity(0.21, -0.13, bc)
    assert (ux, uy, uz) == (0.0, 0.0, 15.0)


def test_swirl_center_is_axial():
    bc = SwirlBC(alpha_s=0.5, u_axial=10.0, eps_reg=1e-6)
    assert swirl_inlet_velocity(0.0, 0.0, bc) == (0.0, 0.0, 10.0)


def test_swirl_tangential_magnitude_on_axis_point():
    r = 0.25
    bc = SwirlBC(alpha_s=0.3, u_axial=10.0, eps_reg=1e-12)
    ux, uy, uz = swirl_inlet_velocity(r, 0.0, bc)
    assert abs(ux) < 1e-9
    assert abs(uy - 0.3 * 10.0 * r / np.sqrt(r * r + 1e-12)) < 1e-12
    assert uz == 10.0


def test_swirl_closed_form_ratio_property():
    bc = SwirlBC(alpha_s=0.5, u_axial=12.0, eps_reg=(0.01 * 0.35) ** 2)
    gen = np.random.default_rng(3)
    pts = gen.uniform(-0.3, 0.3, size=(200, 2))
    r = np.hypot(pts[:, 0], pts[:, 1])
    keep = r >= 10 * np.sqrt(bc.eps_reg)
    ux, uy, uz = swirl_inlet_velocity(pts[:, 0], pts[:, 1], bc)
    ratio = np.hypot(ux, uy) / uz
    expected = bc.alpha_s * r / np.sqrt(r**2 + bc.eps_reg)
    assert np.abs(ratio - expected)[keep].max() < 1e-9


def test_inlet_cell_velocities_carry_mass_flow(small_proxy_domain):
    dom = small_proxy_domain
    props = FluidProps()
    u_ax = axial_speed_from_mass_flow(17790.0, props.rho, 4, 0.49)
    bc = SwirlBC(alpha_s=0.3, u_axial=u_ax,
                 eps_reg=default_eps_reg(dom.inlet_patches[0].half_width))
    cells, vels = inlet_cell_velocities(dom, bc)
    assert len(cells) == sum(len(p.cells) for p in dom.inlet_patches)
    # the normal component equals the axial speed at every inlet cell
    normals = np.concatenate(
        [np.repeat(p.normal[None], len(p.cells), axis=0)
         for p in dom.inlet_patches])
    assert np.allclose((vels * normals).sum(axis=1), u_ax)


# --- Forchheimer ------------------------------------------------------------

def test_forchheimer_zero_velocity():
    assert forchheimer_resistance(0.0, "axial", PorousCoeffs()) == 0.0


def test_forchheimer_axial_hand_value():
    dp = forchheimer_resistance(1.0, "axial", PorousCoeffs())
    assert abs(dp - 8377.0) < 1e-9


def test_forchheimer_lateral_hand_value():
    dp = forchheimer_resistance(2.0, "lateral", PorousCoeffs())
    assert abs(dp - 120245.6) < 1e-9


def test_forchheimer_bad_direction():
    with pytest.raises(ValueError):
        forchheimer_resistance(1.0, "diagonal", PorousCoeffs())


# --- velocity-gradient invariants -------------------------------------------

def _open_box_state(nx=8, ny=8, nz=8):
    dom = build_domain(DomainConfig(nx=nx, ny=ny, nz=nz, layout="open-box"))
    state = FlowState.quiescent(dom.shape)
    return dom, state


def _coords(dom):
    x = (np.arange(dom.nx) + 0.5) * dom.dx
    y = (np.arange(dom.ny) + 0.5) * dom.dy
    return np.meshgrid(x, y, indexing="ij")


def test_q_uniform_field_is_zero():
    dom, state = _open_box_state()
    state.u[:] = 3.0
    state.v[:] = -1.0
    state.w[:] = 2.0
    diag = velocity_gradient_invariants(state, dom)
    assert np.abs(diag.Q).max() == 0.0


def test_q_solid_body_rotation():
    dom, state = _open_box_state()
    omega = 1.7
    xg, yg = _coords(dom)
    state.u[:] = (-omega * yg)[:, :, None]
    state.v[:] = (omega * xg)[:, :, None]
    diag = velocity_gradient_invariants(state, dom)
    interior = np.zeros(dom.shape, bool)
    interior[1:-1, 1:-1, 1:-1] = True
    assert np.abs(diag.Q[interior] - omega**2).max() < 1e-10
    assert np.abs(diag.tau_r[interior] - 1 / omega).max() < 1e-10


def test_q_pure_strain():
    dom, state = _open_box_state()
    s = 0.9
    xg, yg = _coords(dom)
    state.u[:] = (s * xg)[:, :, None]
    state.v[:] = (-s * yg)[:, :, None]
    diag = velocity_gradient_invariants(state, dom)
    interior = np.zeros(dom.shape, bool)
    interior[1:-1, 1:-1, 1:-1] = True
    assert np.abs(diag.Q[interior] - (-(s**2))).max() < 1e-10
    assert np.allclose(diag.Pi_mag[interior], s**2)


def test_diag_time_scales():
    dom, state = _open_box_state()
    state.k[:] = 0.5
    state.eps[:] = 0.25
    diag = velocity_gradient_invariants(state, dom)
    assert np.allclose(diag.tau_m, 2.0)
    assert np.all(np.isinf(diag.tau_r))  # quiescent: |Q| = 0


# --- turbulence sources ------------------------------------------------------

def test_turbulence_sources_standard_vs_struct():
    dom, state = _open_box_state(6, 6, 6)
    state.k[:] = 1.0
    state.eps[:] = 0.5
    diag = velocity_gradient_invariants(state, dom)
    constants = TurbConstants(c_eps3=0.0)
    k_src, eps_src = turbulence_sources(state, diag, constants, dom)
    assert np.allclose(k_src, -0.5)
    assert np.allclose(eps_src, -constants.c_eps2 * 0.25 / 1.0)


def test_turbulence_sources_struct_extra_term():
    dom, state = _open_box_state(6, 6, 6)
    state.k[:] = 1.0
    state.eps[:] = EPS_FLOOR
    diag = velocity_gradient_invariants(state, dom)
    diag.Pi_mag[:] = 2.0
    c = 0.8
    constants = TurbConstants(c_eps3=c)
    _, eps_src = turbulence_sources(state, diag, constants, dom,
                                    production=np.zeros(dom.shape))
    _, eps_src0 = turbulence_sources(state, diag, TurbConstants(c_eps3=0.0),
                                     dom, production=np.zeros(dom.shape))
    assert np.allclose(eps_src - eps_src0, 2.0 * c)


def test_quiescent_sources_hand_values():
    dom, state = _open_box_state(6, 6, 6)
    k0, e0 = 0.3, 0.07
    state.k[:] = k0
    state.eps[:] = e0
    constants = TurbConstants(c_eps3=0.0)
    k_src, eps_src = turbulence_sources(state, None, constants, dom)
    assert np.allclose(k_src, -e0)
    assert np.allclose(eps_src, -constants.c_eps2 * e0**2 / k0)


# --- fluid property defaults vs steam tables ---------------------------------

def test_fluid_defaults_match_steam_tables():
    props = FluidProps()
    t_k = 292.0 + 273.15
    rho = if97_region1_density(15.5e6, t_k)
    nu = iapws_viscosity(t_k, rho) / rho
    assert abs(props.rho - rho) / rho < 0.01
    assert abs(props.nu - nu) / nu < 0.03


# --- transient solver --------------------------------------------------------

def _column_solver(v, nz=40, dz=0.1, model="k-eps", n_inner=2, dt=0.01):
    dom = make_column_domain(nz=nz, dz=dz)
    params = SolverParams(dt=dt, n_inner=n_inner, turbulence_model=model)
    solver = TransientSolver(
        dom, FluidProps(), TurbConstants(), PorousCoeffs(), params,
        inlet_cells=np.array([[0, 0, 0]]),
        inlet_velocities=np.array([[0.0, 0.0, v]]),
        inlet_k=1e-4, inlet_eps=1e-5)
    return dom, solver


def test_zero_inlet_stays_zero():
    dom, solver = _column_solver(0.0)
    for _ in range(4):
        solver.advance_timestep()
    st = solver.state
    assert np.abs(st.u).max() == 0.0
    assert np.abs(st.w).max() == 0.0
    row = solver.history[-1]
    assert row.res_u == row.res_w == row.res_mass == 0.0


def test_porous_column_matches_forchheimer_integral():
    v = 1.0
    dom, solver = _column_solver(v)
    for _ in range(400):
        solver.advance_timestep()
    p = solver.state.p[0, 0, 1:-1]
    dp_dz = (p[0] - p[-1]) / ((len(p) - 1) * dom.dz)
    expected = forchheimer_resistance(v, "axial", PorousCoeffs())
    assert abs(dp_dz - expected) / expected < 0.005
    assert solver.mass_imbalance() < 1e-3


def test_column_mass_conservation_every_step():
    dom, solver = _column_solver(2.0)
    for _ in range(20):
        solver.advance_timestep()
        assert solver.mass_imbalance() < 1e-3


def test_struct_eps_zero_c3_bit_identical_to_k_eps(small_proxy_domain):
    dom = small_proxy_domain
    props = FluidProps()
    u_ax = axial_speed_from_mass_flow(17790.0, props.rho, 4, 0.49)
    swirl = SwirlBC(alpha_s=0.3, u_axial=u_ax,
                    eps_reg=default_eps_reg(dom.inlet_patches[0].half_width))
    states = []
    for model in ("struct-eps", "k-eps"):
        params = SolverParams(dt=0.004, n_inner=2, turbulence_model=model)
        solver = TransientSolver(dom, props, TurbConstants(c_eps3=0.0),
                                 PorousCoeffs(), params, swirl=swirl)
        for _ in range(5):
            solver.advance_timestep()
        states.append(solver.state)
    a, b = states
    for fa, fb in ((a.u, b.u), (a.v, b.v), (a.w, b.w), (a.p, b.p),
                   (a.k, b.k), (a.eps, b.eps)):
        assert np.array_equal(fa, fb)


def test_struct_c3_changes_solution(small_proxy_domain):
    dom = small_proxy_domain
    props = FluidProps()
    u_ax = axial_speed_from_mass_flow(17790.0, props.rho, 4, 0.49)
    swirl = SwirlBC(alpha_s=0.3, u_axial=u_ax,
                    eps_reg=default_eps_reg(dom.inlet_patches[0].half_width))
    eps_fields = []
    for c3 in (0.0, 0.8):
        params = SolverParams(dt=0.004, n_inner=2)
        solver = TransientSolver(dom, props, TurbConstants(c_eps3=c3),
                                 PorousCoeffs(), params, swirl=swirl)
        for _ in range(5):
            solver.advance_timestep()
        eps_fields.append(solver.state.eps.copy())
    assert not np.array_equal(eps_fields[0], eps_fields[1])


def test_run_transient_empty_window(small_proxy_domain):
    dom = small_proxy_domain
    props = FluidProps()
    u_ax = axial_speed_from_mass_flow(17790.0, props.rho, 4, 0.49)
    swirl = SwirlBC(alpha_s=0.0, u_axial=u_ax,
                    eps_reg=default_eps_reg(dom.inlet_patches[0].half_width))
    params = SolverParams(dt=0.01, t_develop=0.0, t_end=0.0, n_inner=1)
    state, dataset = run_transient(dom, props, TurbConstants(),
                                   PorousCoeffs(), swirl, params)
    assert dataset.n_steps == 0
    assert dataset.values.shape[1:] == (9, 15, 15)


def test_snapshot_count_arithmetic():
    assert SolverParams(dt=0.002, t_develop=2.0, t_end=4.0).n_recorded == 1000
    assert SolverParams(dt=0.0005, t_develop=10.0, t_end=15.0).n_recorded \
        == 10000


def test_rotational_consistency_of_recorded_fields():
    """Rotating the patch speed assignment by 90 degrees rotates the
    recorded assembly fields by 90 degrees (within solver tolerance)."""
    import warnings

    from plenumlab.probes import build_sensor_planes, record_snapshot

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        dom = build_domain(DomainConfig(nx=24, ny=24, nz=48))
    props = FluidProps()
    u_ax = axial_speed_from_mass_flow(17790.0, props.rho, 4, 0.49)
    planes = build_sensor_planes(dom)
    scales = (1.3, 1.0, 0.85, 1.0)  # west, east, south, north
    # patch order is west/east/south/north; a +90 degree rotation about z
    # maps west->south, south->east, east->north, north->west
    rotated = (scales[3], scales[2], scales[0], scales[1])
    snaps = []
    for sc in (scales, rotated):
        swirl = SwirlBC(alpha_s=0.3, u_axial=u_ax,
                        eps_reg=default_eps_reg(
                            dom.inlet_patches[0].half_width),
                        patch_scales=sc)
        solver = TransientSolver(dom, props, TurbConstants(), PorousCoeffs(),
                                 SolverParams(dt=0.004, n_inner=2),
                                 swirl=swirl)
        for _ in range(30):
            solver.advance_timestep()
        snaps.append(record_snapshot(solver.state, planes, props))
    base, rot = snaps
    geom = dom.assembly_map.valid
    # rotating the domain by +90 about z maps (row, col) -> (col, 14-row)
    expected = np.zeros_like(base)
    for lay in range(base.shape[0]):
        expected[lay] = np.rot90(base[lay], k=-1)
    scale = np.abs(base[:, geom]).max()
    err = np.abs(rot[:, geom] - expected[:, geom]).max() / scale
    assert err < 1e-4


def test_diverged_reports_step():
    from plenumlab.solver import Diverged

    dom, solver = _column_solver(1.0)
    solver.params.blowup_threshold = 1e-12  # force the guard to trip
    with pytest.raises(Diverged) as err:
        solver.advance_timestep()
    assert err.value.step == 1
    assert len(err.value.history) >= 1
