"""Command-line pipeline: simulate, meshstudy, mask, synth, train, eval,
gradcheck.

Exit codes: 0 success, 2 usage/config errors, 1 runtime errors (with a
category line on stderr).  PLENUMLAB_THREADS caps the BLAS/numba worker
count and must be set before heavy imports, which is why everything below
is imported lazily.
"""

import argparse
import os
import sys


def _cap_threads():
    n = os.environ.get("PLENUMLAB_THREADS")
    if not n:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                "MKL_NUM_THREADS", "NUMBA_NUM_THREADS"):
        os.environ.setdefault(var, n)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="plenumlab",
        description="desk-scale PWR lower-plenum flow lab")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, needs_out=True):
        p.add_argument("--config", help="JSON config or artifact sidecar")
        p.add_argument("--seed", type=int, help="override the run seed")
        p.add_argument("--set", action="append", dest="overrides",
                       metavar="KEY=VALUE", help="dotted config override")
        if needs_out:
            p.add_argument("--out", required=True, help="output path")

    p = sub.add_parser("simulate", help="transient run -> .pfd dataset")
    add_common(p)
    p.add_argument("--fidelity", choices=("fine", "medium", "coarse"),
                   help="scale the grid by the mesh-study ratio")

    p = sub.add_parser("meshstudy",
                       help="error maps between two recorded runs")
    p.add_argument("--reference", required=True, help="reference .pfd")
    p.add_argument("--compare", required=True, help="comparison .pfd")
    p.add_argument("--out", required=True, help="output prefix")
    p.add_argument("--mode", choices=("timeavg", "max"), default="timeavg")
    p.add_argument("--heatmaps", action="store_true")

    p = sub.add_parser("mask", help="emit the checkerboard mask CSV")
    add_common(p)

    p = sub.add_parser("synth", help="synthetic dataset -> .pfd")
    add_common(p)
    p.add_argument("--kind", choices=("drift", "blobs", "noise"))
    p.add_argument("--T", type=int, dest="t_total")

    p = sub.add_parser("train-inpaint", help="train the inpainting net")
    add_common(p)
    p.add_argument("--data", required=True, help="input .pfd dataset")

    p = sub.add_parser("train-forecast", help="train a one-step forecaster")
    add_common(p)
    p.add_argument("--data", required=True, help="input .pfd dataset")
    p.add_argument("--model", choices=("lstm", "convlstm", "deeponet"))

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)

    p = sub.add_parser("gradcheck", help="autodiff verification battery")
    add_common(p, needs_out=False)
    p.add_argument("--out", help="optional report CSV")
    return parser


def _resolve_config(args):
    from .config import (apply_overrides, load_config, validate_config,
                         default_config)

    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = validate_config(default_config())
    if args.overrides:
        cfg = apply_overrides(cfg, args.overrides)
    if args.seed is not None:
        cfg["seed"] = int(args.seed)
    return cfg


def cmd_simulate(args):
    import numpy as np

    from .config import (config_digest, domain_from_config,
                         physics_from_config, scale_for_fidelity,
                         write_sidecar)
    from .probes import write_dataset
    from .solver import run_transient, write_residual_csv

    cfg = _resolve_config(args)
    if args.fidelity:
        cfg = scale_for_fidelity(cfg, args.fidelity)
    domain = domain_from_config(cfg)
    props, constants, porous, swirl, params = physics_from_config(cfg, domain)
    rows = []
    state, dataset = run_transient(
        domain, props, constants, porous, swirl, params,
        fidelity_label=cfg["fidelity"],
        provenance={"config_digest": config_digest(cfg),
                    "domain": domain.to_provenance()},
        residual_rows=rows)
    dataset.provenance["seed"] = cfg["seed"]
    write_dataset(dataset, args.out)
    write_residual_csv(rows, str(args.out) + ".residuals.csv")
    write_sidecar(args.out, cfg, "simulate")
    print(f"wrote {args.out}: T={dataset.n_steps} "
          f"layers={dataset.n_layers}")
    return 0


def cmd_meshstudy(args):
    from .meshstudy import align_series, error_maps, write_error_maps
    from .probes import read_dataset

    ref = read_dataset(args.reference)
    cmp_ = read_dataset(args.compare)
    pairs = align_series(ref, cmp_)
    maps = error_maps(pairs, mode=args.mode,
                      reference_label=ref.fidelity_label,
                      compare_label=cmp_.fidelity_label)
    written = write_error_maps(maps, args.out, heatmaps=args.heatmaps)
    print(f"wrote {len(written)} files; abs layer avg (%):",
          " ".join(f"{v:.3g}" for v in maps.abs_layer_avg))
    return 0


def cmd_mask(args):
    from .config import write_sidecar
    from .dataprep import checkerboard_masks, write_mask_csv
    from .geometry import build_assembly_map

    cfg = _resolve_config(args)
    geom = build_assembly_map(cfg["domain"]["assembly_pitch"]).valid
    masks = checkerboard_masks(geom, cfg["ml"]["checkerboard_phase"])
    write_mask_csv(masks, args.out)
    write_sidecar(args.out, cfg, "mask")
    print(f"wrote {args.out}: {int(masks.miss.sum())} hidden of "
          f"{int(masks.geom.sum())} valid cells")
    return 0


def cmd_synth(args):
    from .config import config_digest, write_sidecar
    from .dataprep import synth_dataset
    from .probes import write_dataset

    cfg = _resolve_config(args)
    if args.kind:
        cfg["synth"]["kind"] = args.kind
    if args.t_total is not None:
        cfg["synth"]["T"] = args.t_total
    dataset = synth_dataset(cfg["synth"]["kind"], cfg["synth"]["T"],
                            cfg["seed"])
    dataset.provenance["config_digest"] = config_digest(cfg)
    write_dataset(dataset, args.out)
    write_sidecar(args.out, cfg, "synth")
    print(f"wrote {args.out}: kind={cfg['synth']['kind']} "
          f"T={dataset.n_steps}")
    return 0


def cmd_train_inpaint(args):
    import numpy as np

    from .config import config_digest, write_sidecar
    from .dataprep import (checkerboard_masks, make_inpaint_samples,
                           split_sequential, zscore_fit)
    from .models import (InpaintNet, InpaintNetConfig, TrainConfig,
                         save_model, train_inpainter, write_curves_csv)
    from .probes import read_dataset

    cfg = _resolve_config(args)
    ml = cfg["ml"]
    dataset = read_dataset(args.data)
    masks = checkerboard_masks(dataset.geom_mask, ml["checkerboard_phase"])
    splits = split_sequential(dataset.n_steps,
                              tuple(ml["splits_inpaint"]))
    levels = list(ml["levels"])
    norm = zscore_fit(dataset.values[np.fromiter(splits[0], np.int64)]
                      [:, levels], masks.obs)
    sets = make_inpaint_samples(dataset, levels, masks, norm, splits,
                                coord_channels=ml["coord_channels"])
    net_cfg = InpaintNetConfig(
        channels=ml["inpaint_channels"], blocks=ml["inpaint_blocks"],
        groups=ml["inpaint_groups"], dropout=ml["inpaint_dropout"],
        in_channels=5 if ml["coord_channels"] else 3)
    net = InpaintNet(net_cfg, cfg["seed"])
    t_cfg = TrainConfig(
        epochs=ml["epochs"], batch_size=ml["batch_size"], lr=ml["lr"],
        weight_decay=ml["weight_decay"],
        plateau_factor=ml["plateau_factor"],
        plateau_patience=ml["plateau_patience"], min_lr=ml["min_lr"],
        seed=cfg["seed"])
    result = train_inpainter(net, sets, t_cfg)
    for name, value in result.best_params.items():
        net.params[name].data = value
    save_model(args.out, net, extra_sidecar={
        "task": "inpaint", "normalization": norm.to_dict(),
        "levels": levels, "checkerboard_phase": ml["checkerboard_phase"],
        "coord_channels": ml["coord_channels"],
        "train_config": t_cfg.to_dict(), "best_epoch": result.best_epoch,
        "config_digest": config_digest(cfg)})
    write_curves_csv(result.curves, str(args.out) + ".curves.csv")
    write_sidecar(args.out, cfg, "train-inpaint")
    print(f"wrote {args.out}: best epoch {result.best_epoch} of "
          f"{ml['epochs']}")
    return 0


def cmd_train_forecast(args):
    from .config import config_digest, write_sidecar
    from .models import (ForecasterConfig, TrainConfig, build_forecaster,
                         make_forecast_data, save_model, train_forecaster,
                         write_curves_csv)
    from .probes import read_dataset

    cfg = _resolve_config(args)
    ml = cfg["ml"]
    if args.model:
        ml["model"] = args.model
    dataset = read_dataset(args.data)
    data = make_forecast_data(dataset, ml["layer"],
                              tuple(ml["splits_forecast"]))
    n_valid = int(dataset.geom_mask.sum())
    f_cfg = ForecasterConfig(kind=ml["model"], hidden=ml["hidden"],
                             n_valid=n_valid,
                             grid=dataset.geom_mask.shape)
    model = build_forecaster(f_cfg, cfg["seed"],
                             geom_mask=dataset.geom_mask)
    t_cfg = TrainConfig(
        epochs=ml["epochs"], batch_size=ml["batch_size"], lr=ml["lr"],
        weight_decay=ml["weight_decay"],
        plateau_factor=ml["plateau_factor"],
        plateau_patience=ml["plateau_patience"], min_lr=ml["min_lr"],
        seed=cfg["seed"])
    result = train_forecaster(model, data, t_cfg)
    for name, value in result.best_params.items():
        model.params[name].data = value
    save_model(args.out, model, extra_sidecar={
        "task": "forecast", "layer": ml["layer"],
        "normalization": data.norm.to_dict(),
        "splits": list(ml["splits_forecast"]),
        "train_config": t_cfg.to_dict(), "best_epoch": result.best_epoch,
        "config_digest": config_digest(cfg)})
    write_curves_csv(result.curves, str(args.out) + ".curves.csv")
    write_sidecar(args.out, cfg, "train-forecast")
    print(f"wrote {args.out}: best epoch {result.best_epoch} of "
          f"{ml['epochs']}")
    return 0


def cmd_eval(args):
    import numpy as np

    from .config import write_sidecar
    from .dataprep import (LevelNorm, MinMaxNorm, checkerboard_masks,
                           make_inpaint_samples, split_sequential)
    from .metrics import heatmap_export, write_metrics_csv
    from .models import (ForecastData, evaluate_inpainting,
                         evaluate_one_step, load_model, make_forecast_data)
    from .probes import read_dataset

    cfg = _resolve_config(args)
    dataset = read_dataset(args.data)
    model, sidecar = load_model(args.checkpoint,
                                geom_mask=dataset.geom_mask)
    task = (sidecar or {}).get("task", "inpaint")
    rows = []
    if task == "inpaint":
        levels = sidecar["levels"]
        masks = checkerboard_masks(dataset.geom_mask,
                                   sidecar.get("checkerboard_phase", 0))
        norm = LevelNorm.from_dict(sidecar["normalization"])
        splits = split_sequential(dataset.n_steps,
                                  tuple(cfg["ml"]["splits_inpaint"]))
        sets = make_inpaint_samples(
            dataset, levels, masks, norm, splits,
            coord_channels=sidecar.get("coord_channels", False))
        aggregate, per_plane = evaluate_inpainting(model, sets["test"], norm)
        rows.extend(aggregate.rows())
        for lev, report in per_plane.items():
            plane = levels[lev] + 1
            rows.append(("plane", plane, "mae", report.mae, report.n,
                         report.excluded))
            rows.append(("plane", plane, "mape", report.mape, report.n,
                         report.excluded))
            rows.append(("plane", plane, "r2", report.r2, report.n,
                         report.excluded))
            heatmap_export(report.per_cell_mape, dataset.geom_mask,
                           f"{args.out}_plane{plane}_mape")
        report = aggregate
    else:
        layer = sidecar["layer"]
        data = make_forecast_data(dataset, layer,
                                  tuple(sidecar.get(
                                      "splits", cfg["ml"]["splits_forecast"])))
        data.norm = MinMaxNorm.from_dict(sidecar["normalization"])
        report = evaluate_one_step(model, data,
                                   window=cfg["ml"]["eval_window"])
        rows.extend(report.rows())
        heatmap_export(report.per_cell_mape, dataset.geom_mask,
                       f"{args.out}_layer{layer + 1}_mape")
    if report.per_layer_boxstats:
        for stats in report.per_layer_boxstats:
            rows.append(("layer-box", stats["layer"], "median",
                         stats["median"], stats["n"], 0))
    write_metrics_csv(str(args.out) + "_metrics.csv", rows)
    write_sidecar(str(args.out) + "_metrics.csv", cfg, "eval")
    print(f"wrote {args.out}_metrics.csv: mae={report.mae:.6g} "
          f"mape={report.mape:.4g}% r2={report.r2:.6g}")
    return 0


def cmd_gradcheck(args):
    from .verification import gradcheck_battery

    reports = gradcheck_battery()
    worst = 0.0
    ok = True
    lines = []
    for name, report in reports:
        status = "pass" if report.passed else "FAIL"
        ok &= report.passed
        worst = max(worst, report.max_rel_err)
        line = (f"{name}: max_rel_err={report.max_rel_err:.3e} "
                f"tol={report.tolerance:.1e} {status}")
        lines.append((name, report))
        print(line)
    if args.out:
        with open(args.out, "w") as f:
            f.write("op,max_rel_err,tolerance,passed\n")
            for name, report in lines:
                f.write(f"{name},{report.max_rel_err:.6e},"
                        f"{report.tolerance:.1e},{int(report.passed)}\n")
    print(f"overall: {'pass' if ok else 'FAIL'} (worst {worst:.3e})")
    return 0 if ok else 1


def main(argv=None):
    _cap_threads()
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "simulate": cmd_simulate,
        "meshstudy": cmd_meshstudy,
        "mask": cmd_mask,
        "synth": cmd_synth,
        "train-inpaint": cmd_train_inpaint,
        "train-forecast": cmd_train_forecast,
        "eval": cmd_eval,
        "gradcheck": cmd_gradcheck,
    }
    try:
        return handlers[args.command](args)
    except FileNotFoundError as err:
        print(f"error (not-found): {err}", file=sys.stderr)
        return 2
    except Exception as err:  # noqa: BLE001 - map to exit categories
        from .config import ConfigError

        if isinstance(err, ConfigError):
            print(f"error (config): {err}", file=sys.stderr)
            return 2
        category = type(err).__name__
        print(f"error ({category}): {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
