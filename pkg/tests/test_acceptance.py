"""Acceptance suite: one test per criterion, each printing a PASS line.

The heavyweight cases (conservation run, the two surrogate-model trend
reproductions, the mesh-study triplet) dominate the runtime; everything
runs on the desk-scale defaults.
"""

import time
import warnings

import numpy as np
import pytest

from conftest import make_column_domain
from plenumlab import autodiff as ad
from plenumlab import models as M
from plenumlab.dataprep import (
    checkerboard_masks,
    make_inpaint_samples,
    split_sequential,
    synth_dataset,
    zscore_fit,
)
from plenumlab.geometry import DomainConfig, build_domain
from plenumlab.meshstudy import align_series, error_maps, write_error_maps
from plenumlab.probes import FlowDataset, build_sensor_planes, record_snapshot
from plenumlab.solver import (
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
    run_transient,
    swirl_inlet_velocity,
    velocity_gradient_invariants,
)


def _report(criterion, ok, detail):
    status = "PASS" if ok else "FAIL"
    print(f"\nACCEPTANCE {criterion}: {status} - {detail}")
    assert ok, f"criterion {criterion}: {detail}"


def _proxy(nx=48, ny=48, nz=96):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return build_domain(DomainConfig(nx=nx, ny=ny, nz=nz))


def _swirl_for(domain, alpha_s, scales=(1.0, 1.0, 1.0, 1.0)):
    props = FluidProps()
    u_ax = axial_speed_from_mass_flow(17790.0, props.rho, 4,
                                      domain.config.inlet_patch_area)
    return SwirlBC(alpha_s=alpha_s, u_axial=u_ax,
                   eps_reg=default_eps_reg(
                       domain.inlet_patches[0].half_width),
                   patch_scales=scales)


def test_criterion_1_swirl_boundary(small_proxy_domain):
    t0 = time.time()
    dom = small_proxy_domain
    worst = 0.0
    for alpha_s in (0.0, 0.3, 0.5):
        bc = _swirl_for(dom, alpha_s)
        from plenumlab.solver import inlet_cell_velocities

        cells, vels = inlet_cell_velocities(dom, bc)
        offset = 0
        for patch in dom.inlet_patches:
            n = len(patch.cells)
            centers = (patch.cells + 0.5) * np.array(
                [dom.dx, dom.dy, dom.dz])
            rel = centers - patch.center
            r = np.hypot(rel @ patch.e1, rel @ patch.e2)
            v = vels[offset:offset + n]
            axial = v @ patch.normal
            tang = np.sqrt(np.maximum((v**2).sum(axis=1) - axial**2, 0.0))
            expected = bc.alpha_s * r / np.sqrt(r**2 + bc.eps_reg)
            worst = max(worst, np.abs(tang / axial - expected).max())
            if alpha_s == 0.0:
                worst = max(worst, np.abs(tang).max())
            offset += n
    elapsed = time.time() - t0
    _report(1, worst < 1e-9 and elapsed < 1.0,
            f"tangential/axial ratio error {worst:.2e} over "
            f"alpha_s in {{0, 0.3, 0.5}}, {elapsed:.2f} s")


def test_criterion_2_forchheimer_column():
    t0 = time.time()
    coeffs = PorousCoeffs()
    worst = 0.0
    details = []
    for v in (0.5, 1.0, 2.0):
        dom = make_column_domain(nz=40, dz=0.1)
        solver = TransientSolver(
            dom, FluidProps(), TurbConstants(), coeffs,
            SolverParams(dt=0.01, n_inner=2, turbulence_model="k-eps"),
            inlet_cells=np.array([[0, 0, 0]]),
            inlet_velocities=np.array([[0.0, 0.0, v]]),
            inlet_k=1e-4, inlet_eps=1e-5)
        for _ in range(400):
            solver.advance_timestep()
        p = solver.state.p[0, 0, 1:-1]
        dp_dz = (p[0] - p[-1]) / ((len(p) - 1) * dom.dz)
        expected = forchheimer_resistance(v, "axial", coeffs)
        rel = abs(dp_dz - expected) / expected
        worst = max(worst, rel)
        details.append(f"v={v}: {dp_dz:.1f} vs {expected:.1f} Pa/m "
                       f"({100 * rel:.3f}%)")
    elapsed = time.time() - t0
    _report(2, worst < 0.005 and elapsed < 60.0,
            "; ".join(details) + f"; {elapsed:.1f} s")


def test_criterion_3_conservation():
    t0 = time.time()
    dom = _proxy(48, 48, 96)
    props = FluidProps()
    solver = TransientSolver(dom, props, TurbConstants(), PorousCoeffs(),
                             SolverParams(dt=0.002, n_inner=2),
                             swirl=_swirl_for(dom, 0.3))
    planes = build_sensor_planes(dom)
    mdot_in = solver._inflow_total * props.rho
    worst_imbalance = 0.0
    layer1_err = np.inf
    for step in range(500):
        solver.advance_timestep()
        worst_imbalance = max(worst_imbalance, solver.mass_imbalance())
        if (step + 1) % 100 == 0:
            snap = record_snapshot(solver.state, planes, props)
            layer1 = snap[0][dom.assembly_map.valid].sum()
            layer1_err = abs(layer1 - mdot_in) / mdot_in
    elapsed = time.time() - t0
    _report(3, worst_imbalance < 1e-3 and layer1_err < 0.01
            and elapsed < 600.0,
            f"max per-step imbalance {worst_imbalance:.2e}, layer-1 sum "
            f"error {layer1_err:.2e}, {elapsed / 60:.1f} min for 500 steps "
            f"on 48x48x96")


def test_criterion_4_turbulence_equivalence(small_proxy_domain):
    dom = small_proxy_domain
    states = []
    for model in ("struct-eps", "k-eps"):
        solver = TransientSolver(
            dom, FluidProps(), TurbConstants(c_eps3=0.0), PorousCoeffs(),
            SolverParams(dt=0.004, n_inner=2, turbulence_model=model),
            swirl=_swirl_for(dom, 0.3))
        for _ in range(5):
            solver.advance_timestep()
        states.append(solver.state)
    a, b = states
    identical = all(
        np.array_equal(fa, fb)
        for fa, fb in ((a.u, b.u), (a.v, b.v), (a.w, b.w), (a.p, b.p),
                       (a.k, b.k), (a.eps, b.eps)))

    # analytic Q cases to machine precision
    box = build_domain(DomainConfig(nx=8, ny=8, nz=8, layout="open-box"))
    x = (np.arange(8) + 0.5) * box.dx
    y = (np.arange(8) + 0.5) * box.dy
    xg, yg = np.meshgrid(x, y, indexing="ij")
    interior = np.zeros(box.shape, bool)
    interior[1:-1, 1:-1, 1:-1] = True
    state = FlowState.quiescent(box.shape)
    state.u[:] = 4.0
    q_uniform = np.abs(velocity_gradient_invariants(state, box).Q).max()
    omega, s = 1.3, 0.7
    state = FlowState.quiescent(box.shape)
    state.u[:] = (-omega * yg)[:, :, None]
    state.v[:] = (omega * xg)[:, :, None]
    q_rot = velocity_gradient_invariants(state, box).Q[interior]
    state = FlowState.quiescent(box.shape)
    state.u[:] = (s * xg)[:, :, None]
    state.v[:] = (-s * yg)[:, :, None]
    q_strain = velocity_gradient_invariants(state, box).Q[interior]
    q_ok = (q_uniform == 0.0
            and np.abs(q_rot - omega**2).max() < 1e-12
            and np.abs(q_strain + s**2).max() < 1e-12)
    _report(4, identical and q_ok,
            f"c_eps3=0 fields bit-identical: {identical}; Q analytic "
            f"cases exact: {q_ok}")


def test_criterion_5_autodiff_gradchecks():
    from plenumlab.verification import gradcheck_battery

    t0 = time.time()
    reports = gradcheck_battery()
    worst = max(r.max_rel_err for _, r in reports)
    ok = all(r.passed for _, r in reports)
    elapsed = time.time() - t0
    _report(5, ok and worst < 1e-5 and elapsed < 120.0,
            f"{len(reports)} gradient checks, worst rel err {worst:.2e}, "
            f"{elapsed:.1f} s")


def test_criterion_6_inpainting_contracts():
    t_total = 1000
    ds = synth_dataset("drift", t_total, 13)
    masks = checkerboard_masks(ds.geom_mask, phase=0)
    hidden = int(masks.miss.sum())
    frac_ok = abs(hidden / 193 - 0.5) < 0.01

    tr, va, te = split_sequential(10000, (0.45, 0.10, 0.45))
    split_ok = (len(tr), len(va), len(te)) == (4500, 1000, 4500)

    splits = split_sequential(t_total, (0.45, 0.10, 0.45))
    levels = [0, 1, 2, 3]
    norm = zscore_fit(ds.values[np.fromiter(splits[0], int)][:, levels],
                      masks.obs)
    sets = make_inpaint_samples(ds, levels, masks, norm, splits)
    inputs = np.concatenate([sets[k].inputs for k in ("train", "val",
                                                      "test")])
    targets = np.concatenate([sets[k].targets for k in ("train", "val",
                                                        "test")])
    assert inputs.shape[0] == 1000
    miss = sets["train"].miss
    net = M.InpaintNet(M.InpaintNetConfig(channels=8, blocks=2, groups=2),
                       seed=99)
    obs3 = np.broadcast_to(masks.obs, miss.shape)
    copy_ok = True
    preds = np.empty_like(targets)
    for lo in range(0, 1000, 200):
        sel = slice(lo, lo + 200)
        pred = M.inpaint_forward(net, ad.Tensor(inputs[sel]), miss)
        preds[sel] = pred.data
        copy_ok &= bool(np.array_equal(pred.data[:, 0][:, obs3],
                                       inputs[sel][:, 0][:, obs3]))

    base = float(M.masked_mse(ad.Tensor(preds[:64]),
                              ad.Tensor(targets[:64]), miss).data)
    poked = preds[:64].copy()
    poked[:, 0][:, obs3] += 123.0
    poked[:, 0][:, ~np.broadcast_to(masks.geom, miss.shape)] -= 7.0
    perturbed = float(M.masked_mse(ad.Tensor(poked),
                                   ad.Tensor(targets[:64]), miss).data)
    loss_ok = base == perturbed

    _report(6, copy_ok and loss_ok and split_ok and frac_ok,
            f"copy-through exact on 1000 samples: {copy_ok}; masked loss "
            f"invariant: {loss_ok}; split 4500/1000/4500: {split_ok}; "
            f"hidden fraction {hidden}/193: {frac_ok}")


def test_criterion_7_inpainting_trend():
    t0 = time.time()
    ds = synth_dataset("drift", 1000, 42)
    masks = checkerboard_masks(ds.geom_mask)
    splits = split_sequential(1000, (0.45, 0.10, 0.45))
    levels = [0, 1, 2, 3]
    norm = zscore_fit(ds.values[np.fromiter(splits[0], int)][:, levels],
                      masks.obs)
    sets = make_inpaint_samples(ds, levels, masks, norm, splits)
    net = M.InpaintNet(M.InpaintNetConfig(channels=32, blocks=4, groups=8),
                       seed=42)
    result = M.train_inpainter(net, sets,
                               M.TrainConfig(epochs=10, batch_size=32,
                                             seed=42))
    for k, v in result.best_params.items():
        net.params[k].data = v
    _, per_plane = M.evaluate_inpainting(net, sets["test"], norm)
    mape = {lev + 1: per_plane[lev].mape for lev in range(4)}
    r2 = {lev + 1: per_plane[lev].r2 for lev in range(4)}
    trend_mape = mape[1] > mape[4]
    trend_r2 = all(r2[p] > r2[1] for p in (2, 3, 4))
    elapsed = time.time() - t0
    _report(7, trend_mape and trend_r2 and elapsed < 3600.0,
            f"plane MAPE %: {', '.join(f'{p}:{mape[p]:.3f}' for p in mape)}"
            f"; plane R2: {', '.join(f'{p}:{r2[p]:.3f}' for p in r2)}; "
            f"{elapsed / 60:.1f} min")


def test_criterion_8_forecaster_ordering():
    t0 = time.time()
    ds = synth_dataset("drift", 320, 42)
    data = M.make_forecast_data(ds, layer=0)
    window = len(M.forecast_pairs(data, "test")[0])
    r2 = {}
    for kind in ("lstm", "deeponet", "convlstm"):
        model = M.build_forecaster(
            M.ForecasterConfig(kind=kind, hidden=128), seed=42,
            geom_mask=ds.geom_mask)
        result = M.train_forecaster(
            model, data, M.TrainConfig(epochs=100, batch_size=32, seed=42))
        for k, v in result.best_params.items():
            model.params[k].data = v
        r2[kind] = M.evaluate_one_step(model, data, window=window).r2
    ordering = (r2["convlstm"] > r2["lstm"]
                and r2["convlstm"] > r2["deeponet"])
    elapsed = time.time() - t0
    _report(8, ordering and elapsed < 3600.0,
            f"base-layer R2: convlstm={r2['convlstm']:.4f}, "
            f"lstm={r2['lstm']:.4f}, deeponet={r2['deeponet']:.4f}; "
            f"{elapsed / 60:.1f} min (matched budgets: 100 epochs, AdamW)")


def test_criterion_9_mesh_study(tmp_path):
    # (a) injected per-cell biases are recovered exactly
    base = synth_dataset("drift", 40, 17)
    geom = base.geom_mask
    gen = np.random.default_rng(1)
    bias = np.where(geom, gen.uniform(-0.10, 0.10, (15, 15)), 0.0)
    compare = FlowDataset(
        values=(base.values.astype(np.float64)
                * (1.0 + bias[None, None])).astype(np.float32),
        geom_mask=geom, t0=base.t0, dt_record=base.dt_record)
    maps = error_maps(align_series(base, compare))
    expected = np.broadcast_to(100.0 * bias, (9, 15, 15))
    ok_cells = ~np.isnan(maps.timeavg_pct)
    inj_err = max(
        np.abs(maps.timeavg_pct[ok_cells] - expected[ok_cells]).max(),
        np.abs(maps.max_pct[ok_cells] - expected[ok_cells]).max())
    injected_ok = inj_err < 0.02  # float32 dataset storage limits this

    # opposite-sign +-5% errors must not cancel in the layer average
    flat = FlowDataset(values=np.where(geom, np.float32(100.0), 0)
                       [None, None].repeat(9, 1).repeat(5, 0),
                       geom_mask=geom, dt_record=1.0)
    signed = flat.values.copy()
    rows, cols = np.nonzero(geom)
    half = len(rows) // 2
    signed[:, :, rows[:half], cols[:half]] *= 1.05
    signed[:, :, rows[half:], cols[half:]] *= 0.95
    pm = error_maps(align_series(flat, FlowDataset(
        values=signed, geom_mask=geom, dt_record=1.0)))
    cancel_ok = np.allclose(pm.abs_layer_avg, 5.0, atol=1e-6)

    # (b) solver triplet at the published cell-size ratios 1 : 7/6 : 1.4
    t0 = time.time()
    datasets = {}
    grids = {"fine": (42, 42, 84), "medium": (36, 36, 72),
             "coarse": (30, 30, 60)}
    for label, (nx, ny, nz) in grids.items():
        dom = _proxy(nx, ny, nz)
        params = SolverParams(dt=0.005, t_develop=0.25, t_end=0.5,
                              n_inner=2)
        _, dataset = run_transient(dom, FluidProps(), TurbConstants(),
                                   PorousCoeffs(), _swirl_for(dom, 0.3),
                                   params, fidelity_label=label)
        datasets[label] = dataset
    summary = {}
    for ref, cmp_ in (("fine", "medium"), ("fine", "coarse"),
                      ("medium", "coarse")):
        m = error_maps(align_series(datasets[ref], datasets[cmp_]),
                       reference_label=ref, compare_label=cmp_)
        write_error_maps(m, tmp_path / f"{ref}_vs_{cmp_}")
        summary[f"{ref}-vs-{cmp_}"] = float(np.nanmean(m.abs_layer_avg))
    produced_ok = all(np.isfinite(v) for v in summary.values())
    elapsed = time.time() - t0
    _report(9, injected_ok and cancel_ok and produced_ok,
            f"injected-bias recovery err {inj_err:.3g}%; +-5% -> abs layer "
            f"avg 5%: {cancel_ok}; triplet abs-layer-avg means (%) "
            + ", ".join(f"{k}={v:.2f}" for k, v in summary.items())
            + f" (values reported, not matched); {elapsed / 60:.1f} min")


def test_criterion_10_determinism(tmp_path):
    from plenumlab.cli import main

    stages = []

    def run(argv):
        assert main(argv) == 0

    # synth
    a = tmp_path / "a.pfd"
    run(["synth", "--kind", "drift", "--T", "40", "--seed", "11",
         "--out", str(a)])
    b = tmp_path / "b.pfd"
    run(["synth", "--config", str(a) + ".sidecar.json", "--out", str(b)])
    stages.append(("synth", a.read_bytes() == b.read_bytes()))

    # simulate (tiny desk run)
    sim_args = ["simulate", "--seed", "11",
                "--set", "domain.nx=24", "--set", "domain.ny=24",
                "--set", "domain.nz=48", "--set", "solver.dt=0.01",
                "--set", "solver.t_develop=0.02",
                "--set", "solver.t_end=0.05"]
    s1 = tmp_path / "s1.pfd"
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        run(sim_args + ["--out", str(s1)])
        s2 = tmp_path / "s2.pfd"
        run(["simulate", "--config", str(s1) + ".sidecar.json",
             "--out", str(s2)])
    stages.append(("simulate", s1.read_bytes() == s2.read_bytes()))

    # meshstudy on the two runs (identical inputs -> identical outputs)
    for tag in ("m1", "m2"):
        run(["meshstudy", "--reference", str(s1), "--compare", str(s2),
             "--out", str(tmp_path / tag)])
    stages.append(("meshstudy",
                   (tmp_path / "m1_summary.csv").read_bytes()
                   == (tmp_path / "m2_summary.csv").read_bytes()))

    # train-inpaint + eval
    train_args = ["train-inpaint", "--data", str(a), "--seed", "11",
                  "--set", "ml.epochs=2", "--set", "ml.batch_size=8",
                  "--set", "ml.inpaint_channels=8",
                  "--set", "ml.inpaint_blocks=1",
                  "--set", "ml.inpaint_groups=2"]
    c1 = tmp_path / "c1.ptn"
    run(train_args + ["--out", str(c1)])
    c2 = tmp_path / "c2.ptn"
    run(["train-inpaint", "--data", str(a),
         "--config", str(c1) + ".sidecar.json", "--out", str(c2)])
    stages.append(("train-inpaint", c1.read_bytes() == c2.read_bytes()))

    for tag in ("e1", "e2"):
        run(["eval", "--checkpoint", str(c1), "--data", str(a),
             "--out", str(tmp_path / tag)])
    stages.append(("eval", (tmp_path / "e1_metrics.csv").read_bytes()
                   == (tmp_path / "e2_metrics.csv").read_bytes()))

    ok = all(flag for _, flag in stages)
    _report(10, ok, "byte-identical re-runs: "
            + ", ".join(f"{name}={flag}" for name, flag in stages))
