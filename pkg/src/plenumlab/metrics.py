"""Shared error metrics over masked assembly fields: MAE, MAPE, R^2."""

import warnings
from dataclasses import dataclass

import numpy as np

MAPE_FLOOR = 1e-6  # [kg/s] cells with |truth| below this are excluded


class EmptyMask(ValueError):
    pass


class ZeroVarianceTruth(Warning):
    """Truth has zero variance; R^2 reported by the documented convention."""


@dataclass
class MetricReport:
    mae: float  # kg/s
    mape: float  # %
    r2: float
    n: int  # contributing (cell, step) pairs
    excluded: int  # pairs dropped from MAPE by the denominator floor
    per_cell_mape: np.ndarray | None = None  # (H, W), NaN off-mask
    per_layer_boxstats: list | None = None

    def rows(self):
        """(scope, layer, metric, value, n, excluded) rows for the CSV."""
        out = [("aggregate", "", "mae", self.mae, self.n, self.excluded),
               ("aggregate", "", "mape", self.mape, self.n, self.excluded),
               ("aggregate", "", "r2", self.r2, self.n, self.excluded)]
        return out


def _boxstats(values):
    values = np.asarray(values, dtype=np.float64)
    q1, med, q3 = np.percentile(values, [25, 50, 75])
    iqr = q3 - q1
    lo = values[values >= q1 - 1.5 * iqr].min()
    hi = values[values <= q3 + 1.5 * iqr].max()
    return {"q1": float(q1), "median": float(med), "q3": float(q3),
            "whisker_lo": float(lo), "whisker_hi": float(hi),
            "n": int(values.size)}


def compute_metrics(pred, truth, mask, window=None, per_cell=False,
                    per_layer=False) -> MetricReport:
    """Metrics over masked cells within the trailing `window` steps.

    pred/truth are (T, H, W) or (T, L, H, W); mask is (H, W) bool.
    MAE = mean|e|; MAPE = 100 * mean(|e| / |truth|) with near-zero truth
    pairs excluded and counted; R^2 = 1 - SSE/SST with SST about the
    window mean of truth.
    """
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ValueError(f"pred {pred.shape} vs truth {truth.shape}")
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise EmptyMask("no cells selected")
    if pred.ndim == 3:
        pred = pred[:, None]
        truth = truth[:, None]
    if window is not None:
        pred = pred[-window:]
        truth = truth[-window:]
    if pred.shape[0] == 0:
        raise EmptyMask("empty evaluation window")

    p = pred[:, :, mask]  # (T, L, M)
    t = truth[:, :, mask]
    err = p - t
    n = err.size
    mae = float(np.abs(err).mean())

    ok = np.abs(t) >= MAPE_FLOOR
    excluded = int(n - ok.sum())
    if ok.any():
        mape = float(100.0 * (np.abs(err)[ok] / np.abs(t)[ok]).mean())
    else:
        mape = float("nan")

    sse = float((err**2).sum())
    sst = float(((t - t.mean()) ** 2).sum())
    if sst == 0.0:
        r2 = 1.0 if sse == 0.0 else float("-inf")
    else:
        r2 = 1.0 - sse / sst

    per_cell_map = None
    layer_cell_mape = None
    if per_cell or per_layer:
        denom_ok = np.abs(truth) >= MAPE_FLOOR
        ratio = np.where(denom_ok, np.abs(pred - truth)
                         / np.maximum(np.abs(truth), MAPE_FLOOR), np.nan)
        with warnings.catch_warnings():
            # cells excluded at every step legitimately average to NaN
            warnings.simplefilter("ignore", RuntimeWarning)
            layer_cell_mape = 100.0 * np.nanmean(ratio, axis=0)  # (L, H, W)
    if per_cell:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            per_cell_map = np.nanmean(layer_cell_mape, axis=0)
        per_cell_map = np.where(mask, per_cell_map, np.nan)
    boxstats = None
    if per_layer:
        boxstats = []
        for lay in range(layer_cell_mape.shape[0]):
            vals = layer_cell_mape[lay][mask]
            vals = vals[np.isfinite(vals)]
            if vals.size:
                stats = _boxstats(vals)
            else:
                stats = {"q1": float("nan"), "median": float("nan"),
                         "q3": float("nan"), "whisker_lo": float("nan"),
                         "whisker_hi": float("nan"), "n": 0}
            stats["layer"] = lay + 1
            boxstats.append(stats)

    return MetricReport(mae=mae, mape=mape, r2=r2, n=n, excluded=excluded,
                        per_cell_mape=per_cell_map,
                        per_layer_boxstats=boxstats)


def write_metrics_csv(path, rows):
    """rows of (scope, layer, metric, value, n, excluded)."""
    with open(path, "w") as f:
        f.write("scope,layer,metric,value,n,excluded\n")
        for scope, layer, metric, value, n, excluded in rows:
            f.write(f"{scope},{layer},{metric},{value:.9g},{n},{excluded}\n")


def heatmap_export(field, geom_mask, path_base):
    """Write a (row, col, value) CSV and a grayscale PGM of a 15x15 field.

    Invalid cells are omitted from the CSV and rendered black in the image;
    valid cells map linearly onto [64, 255].
    """
    field = np.asarray(field, dtype=np.float64)
    geom_mask = np.asarray(geom_mask, dtype=bool)
    if field.shape != geom_mask.shape:
        raise ValueError("field and mask shapes differ")
    path_base = str(path_base)
    csv_path = path_base + ".csv"
    pgm_path = path_base + ".pgm"

    with open(csv_path, "w") as f:
        f.write("row,col,value\n")
        for r in range(field.shape[0]):
            for c in range(field.shape[1]):
                if geom_mask[r, c]:
                    f.write(f"{r},{c},{field[r, c]:.9g}\n")

    valid = field[geom_mask]
    finite = valid[np.isfinite(valid)]
    lo = finite.min() if finite.size else 0.0
    hi = finite.max() if finite.size else 0.0
    span = hi - lo
    img = np.zeros(field.shape, dtype=np.uint8)  # sentinel shade: black
    if span > 0:
        scaled = 64 + 191 * (field - lo) / span
    else:
        scaled = np.full(field.shape, 160.0)
    scaled = np.where(np.isfinite(field), scaled, 0.0)
    img[geom_mask] = np.clip(scaled[geom_mask], 0, 255).astype(np.uint8)
    with open(pgm_path, "wb") as f:
        f.write(f"P5\n{field.shape[1]} {field.shape[0]}\n255\n".encode())
        f.write(img.tobytes(order="C"))
    return csv_path, pgm_path


def read_heatmap_csv(path, shape=(15, 15)):
    field = np.full(shape, np.nan)
    with open(path) as f:
        next(f)
        for line in f:
            r, c, v = line.strip().split(",")
            field[int(r), int(c)] = float(v)
    return field
