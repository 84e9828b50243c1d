"""Run configuration: strict JSON schema, dotted-path overrides, digests.

Every artifact is written with a sidecar carrying the fully resolved
configuration and seed; loading a sidecar as the config reproduces the
artifact bit-exactly.
"""

import copy
import hashlib
import json
from pathlib import Path

from .geometry import DomainConfig, build_domain
from .solver import (
    FluidProps,
    PorousCoeffs,
    SolverParams,
    SwirlBC,
    TurbConstants,
    axial_speed_from_mass_flow,
    default_eps_reg,
)


class ConfigError(ValueError):
    pass


_NUM = (int, float)

# schema values: a type tuple, a nested dict, or a callable validator
SCHEMA = {
    "seed": (int,),
    "fidelity": (str,),
    "domain": {
        "nx": (int,), "ny": (int,), "nz": (int,), "layout": (str,),
        "vessel_inner_radius": _NUM, "barrel_inner_radius": _NUM,
        "core_height": _NUM, "plenum_height": _NUM, "assembly_pitch": _NUM,
        "inlet_patch_area": _NUM, "inlet_patch_drop": _NUM,
        "metadata": None,  # free-form provenance
    },
    "fluid": {"rho": _NUM, "nu": _NUM},
    "turbulence": {
        "c_mu": _NUM, "sigma_k": _NUM, "sigma_eps": _NUM, "c_eps1": _NUM,
        "c_eps2": _NUM, "c_eps3": _NUM, "kappa": _NUM, "wall_e": _NUM,
        "eps_diffusion": (str,),
    },
    "porous": {"alpha_axial": _NUM, "beta_axial": _NUM,
               "alpha_lateral": _NUM, "beta_lateral": _NUM},
    "inlet": {
        "total_mass_flow": _NUM, "alpha_swirl": _NUM, "turb_intensity": _NUM,
        "mixing_length_factor": _NUM, "patch_scales": (list,),
        "eps_reg": _NUM + (type(None),),
    },
    "solver": {
        "dt": _NUM, "t_develop": _NUM, "t_end": _NUM, "n_inner": (int,),
        "turbulence_model": (str,), "urf_momentum": _NUM,
        "urf_pressure": _NUM, "urf_turbulence": _NUM, "momentum_tol": _NUM,
        "momentum_max_sweeps": (int,), "turb_tol": _NUM,
        "turb_max_sweeps": (int,), "pressure_rtol": _NUM,
        "pressure_max_iter": (int,), "nu_t_ratio_max": _NUM,
        "blowup_threshold": _NUM,
    },
    "probes": {"n_layers": (int,), "layer_spacing": _NUM},
    "mesh_ratios": {"fine": _NUM, "medium": _NUM, "coarse": _NUM},
    "synth": {"kind": (str,), "T": (int,)},
    "ml": {
        "task": (str,), "model": (str,), "levels": (list,), "layer": (int,),
        "checkerboard_phase": (int,), "coord_channels": (bool,),
        "splits_inpaint": (list,), "splits_forecast": (list,),
        "epochs": (int,), "batch_size": (int,), "lr": _NUM,
        "weight_decay": _NUM, "plateau_factor": _NUM,
        "plateau_patience": (int,), "min_lr": _NUM,
        "inpaint_channels": (int,), "inpaint_blocks": (int,),
        "inpaint_groups": (int,), "inpaint_dropout": _NUM,
        "hidden": (int,), "eval_window": (int,),
    },
}


def default_config() -> dict:
    """Fully materialized defaults (desk-scale protocol)."""
    return {
        "seed": 0,
        "fidelity": "fine",
        "domain": {
            "nx": 48, "ny": 48, "nz": 96, "layout": "proxy",
            "vessel_inner_radius": 2.1971, "barrel_inner_radius": 1.8796,
            "core_height": 4.059, "plenum_height": 1.5,
            "assembly_pitch": 0.215, "inlet_patch_area": 0.49,
            "inlet_patch_drop": 0.5, "metadata": {},
        },
        "fluid": {"rho": 742.0, "nu": 1.25e-7},
        "turbulence": {
            "c_mu": 0.09, "sigma_k": 1.0, "sigma_eps": 1.3, "c_eps1": 1.44,
            "c_eps2": 1.92, "c_eps3": 0.8, "kappa": 0.41, "wall_e": 9.8,
            "eps_diffusion": "sigma_eps",
        },
        "porous": {"alpha_axial": 5949.0, "beta_axial": 2428.0,
                   "alpha_lateral": 30061.4, "beta_lateral": 0.0},
        "inlet": {
            "total_mass_flow": 17790.0, "alpha_swirl": 0.3,
            "turb_intensity": 0.05, "mixing_length_factor": 0.07,
            "patch_scales": [1.0, 1.0, 1.0, 1.0], "eps_reg": None,
        },
        "solver": {
            "dt": 0.002, "t_develop": 2.0, "t_end": 4.0, "n_inner": 2,
            "turbulence_model": "struct-eps", "urf_momentum": 0.7,
            "urf_pressure": 0.3, "urf_turbulence": 0.7,
            "momentum_tol": 1e-5, "momentum_max_sweeps": 30,
            "turb_tol": 1e-5, "turb_max_sweeps": 30,
            "pressure_rtol": 1e-6, "pressure_max_iter": 2000,
            "nu_t_ratio_max": 1e6, "blowup_threshold": 1e8,
        },
        "probes": {"n_layers": 9, "layer_spacing": 0.5},
        "mesh_ratios": {"fine": 1.0, "medium": 7.0 / 6.0, "coarse": 1.4},
        "synth": {"kind": "drift", "T": 1000},
        "ml": {
            "task": "inpaint", "model": "convlstm", "levels": [0, 1, 2, 3],
            "layer": 0, "checkerboard_phase": 0, "coord_channels": False,
            "splits_inpaint": [0.45, 0.10, 0.45],
            "splits_forecast": [0.6, 0.2, 0.2],
            "epochs": 100, "batch_size": 32, "lr": 1e-3,
            "weight_decay": 0.01, "plateau_factor": 0.5,
            "plateau_patience": 5, "min_lr": 1e-5,
            "inpaint_channels": 64, "inpaint_blocks": 6,
            "inpaint_groups": 8, "inpaint_dropout": 0.1,
            "hidden": 128, "eval_window": 2000,
        },
    }


def _check(section, schema, path):
    if schema is None:
        return
    if not isinstance(section, dict):
        raise ConfigError(f"{path or 'config'} must be an object")
    for key, value in section.items():
        where = f"{path}.{key}" if path else key
        if key not in schema:
            raise ConfigError(f"unknown config key: {where}")
        rule = schema[key]
        if isinstance(rule, dict) or rule is None:
            _check(value, rule, where)
            continue
        bad = not isinstance(value, rule)
        if isinstance(value, bool) and bool not in rule:
            bad = True  # bool passes isinstance(int) but is not a count
        if bad:
            names = "/".join(t.__name__ for t in rule)
            raise ConfigError(f"{where} must be {names}, "
                              f"got {type(value).__name__}")


def validate_config(cfg: dict) -> dict:
    """Merge over defaults, reject unknown keys, return the resolved dict."""
    _check(cfg, SCHEMA, "")
    resolved = default_config()
    for key, value in cfg.items():
        if isinstance(value, dict) and isinstance(resolved.get(key), dict):
            resolved[key].update(copy.deepcopy(value))
        else:
            resolved[key] = copy.deepcopy(value)
    if resolved["fidelity"] not in ("fine", "medium", "coarse"):
        raise ConfigError("fidelity must be fine|medium|coarse")
    return resolved


def load_config(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config not found: {path}")
    with open(path) as f:
        raw = json.load(f)
    if "resolved_config" in raw:  # artifact sidecar reused as a config
        raw = raw["resolved_config"]
    return validate_config(raw)


def apply_overrides(cfg: dict, assignments) -> dict:
    """--set dotted.path=value overrides; values parse as JSON first."""
    cfg = copy.deepcopy(cfg)
    for assignment in assignments or ():
        if "=" not in assignment:
            raise ConfigError(f"override must look like key=value: "
                              f"{assignment!r}")
        key, _, raw_value = assignment.partition("=")
        try:
            value = json.loads(raw_value)
        except json.JSONDecodeError:
            value = raw_value
        node = cfg
        parts = key.split(".")
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                raise ConfigError(f"unknown config section in --set: {key}")
            node = node[part]
        if parts[-1] not in node:
            raise ConfigError(f"unknown config key in --set: {key}")
        node[parts[-1]] = value
    return validate_config(cfg)


def config_digest(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def scale_for_fidelity(cfg: dict, fidelity: str) -> dict:
    """Scale cell size by the mesh-study ratio for this fidelity level."""
    cfg = copy.deepcopy(cfg)
    ratio = cfg["mesh_ratios"][fidelity]
    for axis in ("nx", "ny", "nz"):
        cfg["domain"][axis] = max(int(round(cfg["domain"][axis] / ratio)), 1)
    cfg["fidelity"] = fidelity
    return cfg


# ---------------------------------------------------------------------------
# builders

def domain_from_config(cfg: dict):
    d = cfg["domain"]
    return build_domain(DomainConfig(
        nx=d["nx"], ny=d["ny"], nz=d["nz"], layout=d["layout"],
        vessel_inner_radius=d["vessel_inner_radius"],
        barrel_inner_radius=d["barrel_inner_radius"],
        core_height=d["core_height"], plenum_height=d["plenum_height"],
        assembly_pitch=d["assembly_pitch"],
        inlet_patch_area=d["inlet_patch_area"],
        inlet_patch_drop=d["inlet_patch_drop"],
        metadata=d.get("metadata", {}),
    ))


def physics_from_config(cfg: dict, domain=None):
    """(props, constants, porous, swirl, params) from the resolved dict."""
    props = FluidProps(rho=cfg["fluid"]["rho"], nu=cfg["fluid"]["nu"])
    t = cfg["turbulence"]
    constants = TurbConstants(
        c_mu=t["c_mu"], sigma_k=t["sigma_k"], sigma_eps=t["sigma_eps"],
        c_eps1=t["c_eps1"], c_eps2=t["c_eps2"], c_eps3=t["c_eps3"],
        kappa=t["kappa"], wall_e=t["wall_e"],
        eps_diffusion=t["eps_diffusion"])
    p = cfg["porous"]
    porous = PorousCoeffs(alpha_axial=p["alpha_axial"],
                          beta_axial=p["beta_axial"],
                          alpha_lateral=p["alpha_lateral"],
                          beta_lateral=p["beta_lateral"])
    s = cfg["solver"]
    params = SolverParams(
        dt=s["dt"], t_develop=s["t_develop"], t_end=s["t_end"],
        n_inner=s["n_inner"], turbulence_model=s["turbulence_model"],
        urf_momentum=s["urf_momentum"], urf_pressure=s["urf_pressure"],
        urf_turbulence=s["urf_turbulence"], momentum_tol=s["momentum_tol"],
        momentum_max_sweeps=s["momentum_max_sweeps"],
        turb_tol=s["turb_tol"], turb_max_sweeps=s["turb_max_sweeps"],
        pressure_rtol=s["pressure_rtol"],
        pressure_max_iter=s["pressure_max_iter"],
        nu_t_ratio_max=s["nu_t_ratio_max"],
        blowup_threshold=s["blowup_threshold"])
    inl = cfg["inlet"]
    swirl = None
    if domain is not None and domain.inlet_patches:
        u_axial = axial_speed_from_mass_flow(
            inl["total_mass_flow"], props.rho, len(domain.inlet_patches),
            cfg["domain"]["inlet_patch_area"])
        eps_reg = inl["eps_reg"]
        if eps_reg is None:
            eps_reg = default_eps_reg(domain.inlet_patches[0].half_width)
        swirl = SwirlBC(alpha_s=inl["alpha_swirl"], u_axial=u_axial,
                        eps_reg=eps_reg,
                        patches=domain.inlet_patches,
                        patch_scales=tuple(inl["patch_scales"]),
                        turb_intensity=inl["turb_intensity"],
                        mixing_length_factor=inl["mixing_length_factor"])
    return props, constants, porous, swirl, params


def write_sidecar(path, cfg: dict, artifact: str, extra: dict | None = None):
    payload = {
        "artifact": artifact,
        "resolved_config": cfg,
        "seed": cfg["seed"],
        "digest": config_digest(cfg),
    }
    if extra:
        payload.update(extra)
    side = Path(str(path) + ".sidecar.json")
    with open(side, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    return side
