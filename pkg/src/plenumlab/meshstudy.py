"""Assembly-wise mesh-sensitivity error maps between two recorded runs.

Percent errors use 100 * (compare - reference) / reference with the finer
mesh as reference.  The per-layer summary averages |error| over valid cells
so positive and negative deviations cannot cancel.
"""

from dataclasses import dataclass

import numpy as np

from .metrics import heatmap_export
from .probes import FlowDataset

REFERENCE_FLOOR = 1e-6  # [kg/s]


class NoOverlap(ValueError):
    pass


class MaskMismatch(ValueError):
    pass


@dataclass
class AlignedPairs:
    """Snapshot pairs matched in time between two datasets."""

    reference: np.ndarray  # (P, L, H, W)
    compare: np.ndarray  # (P, L, H, W)
    times: np.ndarray  # (P,) reference times
    geom_mask: np.ndarray

    @property
    def n_pairs(self):
        return self.reference.shape[0]


def align_series(a: FlowDataset, b: FlowDataset) -> AlignedPairs:
    """Nearest-time pairing within half the finer recording interval.

    a is the reference series.  Pairs outside the overlapping window are
    dropped; raises NoOverlap when nothing pairs up.
    """
    if not np.array_equal(a.geom_mask, b.geom_mask):
        raise MaskMismatch("geometry masks differ")
    if a.n_layers != b.n_layers:
        raise MaskMismatch(f"layer counts differ: {a.n_layers} vs {b.n_layers}")
    if a.n_steps == 0 or b.n_steps == 0:
        raise NoOverlap("one of the series is empty")
    ta, tb = a.times, b.times
    dts = [dt for dt in (a.dt_record, b.dt_record) if dt > 0]
    tol = min(dts) / 2.0 if dts else 0.0
    j = np.clip(np.searchsorted(tb, ta), 0, len(tb) - 1)
    j_lo = np.clip(j - 1, 0, len(tb) - 1)
    pick = np.where(np.abs(tb[j] - ta) <= np.abs(tb[j_lo] - ta), j, j_lo)
    dist = np.abs(tb[pick] - ta)
    keep = dist <= tol + 1e-12
    if not keep.any():
        raise NoOverlap("recording windows do not overlap")
    # one-to-one: if several reference steps grabbed the same b snapshot,
    # keep the closest
    ia = np.nonzero(keep)[0]
    jb = pick[keep]
    order = np.lexsort((dist[keep], jb))
    seen = set()
    sel = []
    for o in order:
        if jb[o] not in seen:
            seen.add(jb[o])
            sel.append(o)
    sel = np.sort(np.array(sel))
    ia, jb = ia[sel], jb[sel]
    return AlignedPairs(reference=a.values[ia].astype(np.float64),
                        compare=b.values[jb].astype(np.float64),
                        times=ta[ia], geom_mask=a.geom_mask)


@dataclass
class ErrorMaps:
    """Per-assembly max / time-averaged percent differences."""

    max_pct: np.ndarray  # (L, H, W), NaN off-geometry and at excluded cells
    timeavg_pct: np.ndarray
    abs_layer_avg: np.ndarray  # (L,)
    mode: str  # which map feeds abs_layer_avg
    reference_label: str
    compare_label: str
    excluded_cells: int  # cells flagged by the near-zero-reference floor
    excluded_mask: np.ndarray  # (L, H, W) bool


def error_maps(pairs: AlignedPairs, mode: str = "timeavg",
               reference_label: str = "", compare_label: str = "",
               floor: float = REFERENCE_FLOOR) -> ErrorMaps:
    """Percent-difference maps over the paired transient.

    "max" reports the signed error of maximum magnitude over the pairs,
    "timeavg" the signed mean; both maps are always computed and `mode`
    selects which one feeds the absolute layer average.
    """
    if mode not in ("max", "timeavg"):
        raise ValueError("mode must be 'max' or 'timeavg'")
    if pairs.n_pairs < 1:
        raise NoOverlap("need at least one pair")
    ref = pairs.reference
    cmp_ = pairs.compare
    geom = pairs.geom_mask
    near_zero = (np.abs(ref) < floor).any(axis=0)  # (L, H, W)
    near_zero &= geom[None, :, :]
    valid = geom[None, :, :] & ~near_zero

    with np.errstate(divide="ignore", invalid="ignore"):
        e = 100.0 * (cmp_ - ref) / ref  # (P, L, H, W)
    idx = np.argmax(np.abs(e), axis=0)  # (L, H, W)
    max_pct = np.take_along_axis(e, idx[None], axis=0)[0]
    timeavg_pct = e.mean(axis=0)
    max_pct = np.where(valid, max_pct, np.nan)
    timeavg_pct = np.where(valid, timeavg_pct, np.nan)

    chosen = max_pct if mode == "max" else timeavg_pct
    abs_layer_avg = np.array([
        np.abs(chosen[lay][valid[lay]]).mean() if valid[lay].any()
        else np.nan
        for lay in range(chosen.shape[0])
    ])
    return ErrorMaps(max_pct=max_pct, timeavg_pct=timeavg_pct,
                     abs_layer_avg=abs_layer_avg, mode=mode,
                     reference_label=reference_label,
                     compare_label=compare_label,
                     excluded_cells=int(near_zero.sum()),
                     excluded_mask=near_zero)


def write_error_maps(maps: ErrorMaps, path_base, heatmaps: bool = False):
    """Per-layer CSVs plus a summary CSV (and optional PGM heatmaps)."""
    path_base = str(path_base)
    geom = ~np.isnan(maps.timeavg_pct) | ~np.isnan(maps.max_pct)
    written = []
    n_layers = maps.max_pct.shape[0]
    for lay in range(n_layers):
        p = f"{path_base}_layer{lay + 1}.csv"
        with open(p, "w") as f:
            f.write("row,col,max_pct,timeavg_pct\n")
            for r in range(maps.max_pct.shape[1]):
                for c in range(maps.max_pct.shape[2]):
                    if geom[lay, r, c]:
                        f.write(f"{r},{c},{maps.max_pct[lay, r, c]:.9g},"
                                f"{maps.timeavg_pct[lay, r, c]:.9g}\n")
        written.append(p)
        if heatmaps:
            written.extend(heatmap_export(
                maps.timeavg_pct[lay], geom[lay],
                f"{path_base}_layer{lay + 1}_timeavg"))
    summary = f"{path_base}_summary.csv"
    with open(summary, "w") as f:
        f.write("layer,abs_layer_avg_pct,mode,reference,compare,excluded\n")
        for lay in range(n_layers):
            f.write(f"{lay + 1},{maps.abs_layer_avg[lay]:.9g},{maps.mode},"
                    f"{maps.reference_label},{maps.compare_label},"
                    f"{maps.excluded_cells}\n")
    written.append(summary)
    return written
