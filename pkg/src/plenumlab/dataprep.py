"""Masks, normalizations, splits, and model-ready samples.

Also provides a synthetic dataset generator so the ML stack can be
exercised and tested without running the flow solver.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import rng
from .geometry import build_assembly_map
from .probes import FlowDataset

SIGMA_FLOOR = 1e-8  # [kg/s]


class DegenerateLevel(UserWarning):
    """All observed training values at a level are equal; sigma floored."""


class LevelOutOfRange(ValueError):
    pass


@dataclass
class MaskSet:
    """Geometry / missing / observed boolean planes."""

    geom: np.ndarray
    miss: np.ndarray
    obs: np.ndarray

    def __post_init__(self):
        self.geom = np.asarray(self.geom, dtype=bool)
        self.miss = np.asarray(self.miss, dtype=bool)
        self.obs = np.asarray(self.obs, dtype=bool)
        if np.any(self.miss & ~self.geom):
            raise ValueError("missing mask extends outside the geometry")
        if not np.array_equal(self.obs, self.geom & ~self.miss):
            raise ValueError("observed mask must equal geom & ~miss")


def checkerboard_masks(geom, phase: int = 0) -> MaskSet:
    """Hide ~50% of valid cells on a parity checkerboard."""
    geom = np.asarray(geom, dtype=bool)
    if phase not in (0, 1):
        raise ValueError("phase must be 0 or 1")
    if not geom.any():
        raise ValueError("geometry mask has no valid cells")
    r, c = np.indices(geom.shape)
    miss = geom & ((r + c + phase) % 2 == 0)
    return MaskSet(geom=geom, miss=miss, obs=geom & ~miss)


def write_mask_csv(masks: MaskSet, path):
    with open(path, "w") as f:
        f.write("row,col,geom,miss,obs\n")
        for r in range(masks.geom.shape[0]):
            for c in range(masks.geom.shape[1]):
                f.write(f"{r},{c},{int(masks.geom[r, c])},"
                        f"{int(masks.miss[r, c])},{int(masks.obs[r, c])}\n")


# ---------------------------------------------------------------------------
# normalization

@dataclass
class LevelNorm:
    """Per-axial-level standardization constants (population convention)."""

    mu: np.ndarray  # (L,)
    sigma: np.ndarray  # (L,)

    def to_dict(self):
        return {"mu": self.mu.tolist(), "sigma": self.sigma.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(mu=np.asarray(d["mu"], dtype=np.float64),
                   sigma=np.asarray(d["sigma"], dtype=np.float64))


def zscore_fit(train_values, obs_mask, sigma_floor: float = SIGMA_FLOOR
               ) -> LevelNorm:
    """Fit per-level mean/std from observed cells of the training split only.

    train_values is (T, L, H, W); obs_mask is (H, W).
    """
    train_values = np.asarray(train_values, dtype=np.float64)
    obs_mask = np.asarray(obs_mask, dtype=bool)
    t, n_levels = train_values.shape[:2]
    if t * int(obs_mask.sum()) < 2:
        raise ValueError("need at least 2 observed training values per level")
    mu = np.empty(n_levels)
    sigma = np.empty(n_levels)
    for lev in range(n_levels):
        vals = train_values[:, lev][:, obs_mask]
        mu[lev] = vals.mean()
        sigma[lev] = vals.std()  # population
        if sigma[lev] < sigma_floor:
            warnings.warn(f"level {lev} observed training values are all "
                          "equal; sigma floored", DegenerateLevel,
                          stacklevel=2)
            sigma[lev] = sigma_floor
    return LevelNorm(mu=mu, sigma=sigma)


def zscore_apply(values, norm: LevelNorm):
    """(x - mu) / sigma per level; values (..., L, H, W)."""
    mu = norm.mu[:, None, None]
    sigma = norm.sigma[:, None, None]
    return (np.asarray(values, dtype=np.float64) - mu) / sigma


def zscore_invert(z, norm: LevelNorm):
    mu = norm.mu[:, None, None]
    sigma = norm.sigma[:, None, None]
    return np.asarray(z, dtype=np.float64) * sigma + mu


@dataclass
class MinMaxNorm:
    """Per-feature min/max scaling to [0, 1]; degenerate features map to 0."""

    vmin: np.ndarray
    vmax: np.ndarray

    @property
    def span(self):
        return self.vmax - self.vmin

    def to_dict(self):
        return {"vmin": self.vmin.tolist(), "vmax": self.vmax.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(vmin=np.asarray(d["vmin"], dtype=np.float64),
                   vmax=np.asarray(d["vmax"], dtype=np.float64))


def minmax_fit(train_values) -> MinMaxNorm:
    """Fit per-feature bounds over the leading (time) axis."""
    train_values = np.asarray(train_values, dtype=np.float64)
    if train_values.shape[0] < 1:
        raise ValueError("need at least 1 training step")
    return MinMaxNorm(vmin=train_values.min(axis=0),
                      vmax=train_values.max(axis=0))


def minmax_apply(values, norm: MinMaxNorm):
    span = norm.span
    ok = span > 0
    out = np.zeros_like(np.asarray(values, dtype=np.float64))
    np.divide(values - norm.vmin, span, out=out,
              where=np.broadcast_to(ok, out.shape))
    return out


def minmax_invert(z, norm: MinMaxNorm):
    return np.asarray(z, dtype=np.float64) * norm.span + norm.vmin


# ---------------------------------------------------------------------------
# splits and samples

def split_sequential(t_total: int, fractions=(0.45, 0.10, 0.45)):
    """Contiguous ordered (train, val, test) ranges covering [0, T)."""
    if t_total < 0:
        raise ValueError("T must be >= 0")
    f_train, f_val, f_test = fractions
    if min(f_train, f_val, f_test) < 0:
        raise ValueError("fractions must be non-negative")
    if abs(f_train + f_val + f_test - 1.0) > 1e-9:
        raise ValueError("fractions must sum to 1")
    b1 = math.floor(f_train * t_total)
    b2 = math.floor((f_train + f_val) * t_total)
    return range(0, b1), range(b1, b2), range(b2, t_total)


@dataclass
class InpaintSample:
    """One timestep of the inpainting task.

    input channels: [z * obs, obs, geom] (+ optional row/col coordinates),
    each replicated over the L reconstructed levels.
    """

    input: np.ndarray  # (C, L, H, W)
    target: np.ndarray  # (1, L, H, W)
    miss: np.ndarray  # (L, H, W) bool
    t_index: int


@dataclass
class InpaintSampleSet:
    """Stacked samples for one split (shared static masks)."""

    inputs: np.ndarray  # (N, C, L, H, W)
    targets: np.ndarray  # (N, 1, L, H, W)
    miss: np.ndarray  # (L, H, W) bool
    t_indices: np.ndarray  # (N,)

    def __len__(self):
        return self.inputs.shape[0]

    def sample(self, i) -> InpaintSample:
        return InpaintSample(input=self.inputs[i], target=self.targets[i],
                             miss=self.miss, t_index=int(self.t_indices[i]))


def make_inpaint_samples(dataset: FlowDataset, levels, masks: MaskSet,
                         norm: LevelNorm, split, coord_channels: bool = False):
    """Build sample sets for the given splits.

    levels are 0-based layer indices into the dataset; split is a dict or
    tuple of index ranges (e.g. from split_sequential).  norm must have been
    fitted on the training split.
    """
    levels = list(levels)
    if any(not 0 <= lev < dataset.n_layers for lev in levels):
        raise LevelOutOfRange(
            f"levels {levels} outside dataset with {dataset.n_layers} layers")
    if len(norm.mu) != len(levels):
        raise ValueError("norm has a different level count than requested")
    if isinstance(split, dict):
        items = split.items()
    else:
        items = zip(("train", "val", "test"), split)

    h, w = dataset.geom_mask.shape
    n_levels = len(levels)
    obs = masks.obs.astype(np.float32)
    geom = masks.geom.astype(np.float32)
    miss3d = np.broadcast_to(masks.miss, (n_levels, h, w)).copy()
    static = [np.broadcast_to(obs, (n_levels, h, w)),
              np.broadcast_to(geom, (n_levels, h, w))]
    if coord_channels:
        rows, cols = np.indices((h, w), dtype=np.float32)
        static.append(np.broadcast_to(rows / h, (n_levels, h, w)))
        static.append(np.broadcast_to(cols / w, (n_levels, h, w)))

    out = {}
    for name, indices in items:
        idx = np.fromiter(indices, dtype=np.int64)
        z = zscore_apply(dataset.values[idx][:, levels],
                         norm).astype(np.float32)
        n = len(idx)
        channels = [z * obs] + [np.broadcast_to(s, (n, n_levels, h, w))
                                for s in static]
        inputs = np.stack([np.asarray(c, dtype=np.float32)
                           for c in channels], axis=1)
        targets = (z * geom)[:, None]
        out[name] = InpaintSampleSet(inputs=inputs, targets=targets,
                                     miss=miss3d, t_indices=idx)
    return out


# ---------------------------------------------------------------------------
# synthetic datasets

def synth_dataset(kind: str, t_total: int, seed: int, n_layers: int = 9,
                  dt_record: float = 1.0) -> FlowDataset:
    """Deterministic solver-independent fixtures.

    "drift": smoothly advecting in-plane pattern shared across layers plus
    time-correlated cell noise, both damped with height the way the core
    homogenizes flow.  "blobs": orbiting Gaussian bumps.  "noise": i.i.d.
    Gaussian around a constant mean.
    """
    if t_total < 0:
        raise ValueError("T must be >= 0")
    if kind not in ("drift", "blobs", "noise"):
        raise ValueError(f"unknown synthetic kind {kind!r}")
    geom = build_assembly_map(0.215).valid
    gen = rng.generator(seed, "synth", kind)
    h = w = 15
    values = np.zeros((t_total, n_layers, h, w), dtype=np.float64)
    lev = np.arange(n_layers)

    if kind == "noise":
        mean, sd = 90.0, 5.0
        values[:] = mean + sd * gen.standard_normal(values.shape)
    else:
        base = 92.0 * (1.0 - 0.02 * lev)  # kg/s per assembly
        amp_smooth = 6.0 * 0.55**lev
        amp_rough = 3.0 * 0.45**lev
        phi = 0.7  # AR(1) persistence of the cell noise
        u = (np.arange(h) + 0.5)[:, None] / h
        v = (np.arange(w) + 0.5)[None, :] / w
        noise = gen.standard_normal((n_layers, h, w))
        for t in range(t_total):
            if kind == "drift":
                s = (0.6 * np.sin(2 * np.pi * (2 * u + 1.5 * v - 0.013 * t))
                     + 0.4 * np.cos(2 * np.pi * (3 * v - 0.5 * u + 0.008 * t)))
            else:  # blobs
                s = np.zeros((h, w))
                for m, (rad, om, ph) in enumerate(
                        [(4.0, 0.011, 0.0), (3.0, -0.017, 2.1)]):
                    cr = 7.0 + rad * np.sin(om * t + ph)
                    cc = 7.0 + rad * np.cos(om * t + ph)
                    rr = (np.arange(h)[:, None] - cr) ** 2
                    cc2 = (np.arange(w)[None, :] - cc) ** 2
                    s += (1.0 if m == 0 else -0.8) * np.exp(
                        -(rr + cc2) / (2 * 2.5**2))
            if t > 0:
                noise = (phi * noise + np.sqrt(1 - phi**2)
                         * gen.standard_normal((n_layers, h, w)))
            values[t] = (base[:, None, None]
                         + amp_smooth[:, None, None] * s[None]
                         + amp_rough[:, None, None] * noise)

    values[:, :, ~geom] = 0.0
    return FlowDataset(
        values=values.astype(np.float32),
        geom_mask=geom,
        t0=0.0,
        dt_record=dt_record,
        fidelity_label=f"synthetic-{kind}",
        provenance={"generator": kind, "seed": int(seed), "T": int(t_total),
                    "n_layers": int(n_layers)},
    )
