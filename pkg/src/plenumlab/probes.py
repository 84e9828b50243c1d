"""Sensor planes and the assembly mass-flow dataset format.

One area-averaged mass-flow plane per assembly per layer, 9 layers spaced
0.5 m from the core inlet, snapped to the nearest cell-face layer.  Datasets
are (T, L, 15, 15) float32 with invalid cells stored as exact zeros.

Binary format "PFD1": magic 'PFD1'; little-endian u32 T, L, H, W; H*W bytes
of geometry mask (0/1, row-major); T*L*H*W little-endian float32 in
(t, layer, row, col) order.  A JSON sidecar carries t0, dt_record, fidelity
label, and provenance.
"""

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import CellClass, Domain

MAGIC = b"PFD1"
N_LAYERS = 9
LAYER_SPACING = 0.5  # [m]


class CoreTooShort(ValueError):
    pass


class BadMagic(ValueError):
    pass


class TruncatedFile(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


@dataclass
class SensorPlanes:
    """Face sets defining the per-assembly mass-flow planes."""

    layer_elevations: np.ndarray  # (L,) nominal elevations [m]
    k_faces: np.ndarray  # (L,) z-face index each layer snapped to
    assembly_rows: np.ndarray  # (A,) assembly row per column group
    assembly_cols: np.ndarray  # (A,)
    column_cells: list  # per assembly: (n_i, 2) in-plane cell indices
    face_area: float  # dx*dy [m^2]

    @property
    def n_planes(self) -> int:
        return len(self.k_faces) * len(self.assembly_rows)


def build_sensor_planes(domain: Domain, n_layers: int = N_LAYERS,
                        spacing: float = LAYER_SPACING) -> SensorPlanes:
    """Planes at z_core_inlet + j*spacing, snapped to the nearest z face."""
    lz = domain.nz * domain.dz
    top_needed = domain.z_core_inlet + (n_layers - 1) * spacing
    if top_needed > lz + 1e-9:
        raise CoreTooShort(
            f"top probe layer at {top_needed:.3f} m exceeds domain {lz:.3f} m")
    elev = domain.z_core_inlet + spacing * np.arange(n_layers)
    k_faces = np.rint(elev / domain.dz).astype(int)
    k_faces = np.clip(k_faces, 1, domain.nz - 1)

    amap = domain.assembly_map
    rows, cols, cells = [], [], []
    for r in range(15):
        for c in range(15):
            if not amap.valid[r, c]:
                continue
            ii, jj = np.nonzero((domain.assembly_row == r)
                                & (domain.assembly_col == c))
            if ii.size == 0:
                raise CoreTooShort(
                    f"assembly ({r},{c}) has no footprint columns")
            rows.append(r)
            cols.append(c)
            cells.append(np.stack([ii, jj], axis=1))
    return SensorPlanes(
        layer_elevations=elev,
        k_faces=k_faces,
        assembly_rows=np.array(rows),
        assembly_cols=np.array(cols),
        column_cells=cells,
        face_area=domain.dx * domain.dy,
    )


def record_snapshot(state, planes: SensorPlanes, props) -> np.ndarray:
    """Area-integrated mass flow per plane: mdot = rho * sum(w_face * A).

    Uses the solver's conservative face fluxes when the state carries them,
    otherwise arithmetically averages the cell-centred axial velocity onto
    faces.
    """
    n_layers = len(planes.k_faces)
    snap = np.zeros((n_layers, 15, 15), dtype=np.float32)
    flux = getattr(state, "face_flux_z", None)
    if flux is None:
        w = state.w
        nz = w.shape[2]
        flux = np.zeros((w.shape[0], w.shape[1], nz + 1))
        flux[:, :, 1:nz] = 0.5 * (w[:, :, :-1] + w[:, :, 1:]) * planes.face_area
        flux[:, :, 0] = w[:, :, 0] * planes.face_area
        flux[:, :, nz] = w[:, :, -1] * planes.face_area
    for a, cells in enumerate(planes.column_cells):
        r = planes.assembly_rows[a]
        c = planes.assembly_cols[a]
        ii, jj = cells[:, 0], cells[:, 1]
        for lay, k in enumerate(planes.k_faces):
            snap[lay, r, c] = props.rho * flux[ii, jj, k].sum()
    return snap


@dataclass
class FlowDataset:
    """Time series of assembly-wise mass flow, shape (T, L, 15, 15)."""

    values: np.ndarray  # float32, kg/s, zeros at invalid cells
    geom_mask: np.ndarray  # (15, 15) bool
    t0: float = 0.0
    dt_record: float = 0.0
    fidelity_label: str = ""
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float32)
        self.geom_mask = np.asarray(self.geom_mask, dtype=bool)
        if self.values.ndim != 4:
            raise DimensionMismatch("values must be (T, L, H, W)")
        if self.geom_mask.shape != self.values.shape[2:]:
            raise DimensionMismatch("geometry mask does not match values")

    @property
    def n_steps(self) -> int:
        return self.values.shape[0]

    @property
    def n_layers(self) -> int:
        return self.values.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt_record * np.arange(self.n_steps)

    def validate(self):
        if not np.isfinite(self.values[:, :, self.geom_mask]).all():
            raise ValueError("non-finite values at valid cells")
        if self.n_steps and np.any(self.values[:, :, ~self.geom_mask] != 0.0):
            raise ValueError("nonzero values at invalid cells")


def write_dataset(dataset: FlowDataset, path):
    """Serialize to .pfd plus a .json sidecar; bit-exact round trip."""
    dataset.validate()
    path = Path(path)
    t, l, h, w = dataset.values.shape
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<4I", t, l, h, w))
        f.write(dataset.geom_mask.astype(np.uint8).tobytes(order="C"))
        f.write(dataset.values.astype("<f4").tobytes(order="C"))
    sidecar = {
        "t0": dataset.t0,
        "dt_record": dataset.dt_record,
        "fidelity_label": dataset.fidelity_label,
        "provenance": dataset.provenance,
    }
    with open(path.with_suffix(path.suffix + ".json"), "w") as f:
        json.dump(sidecar, f, indent=2, sort_keys=True)
        f.write("\n")


def _read_exact(f, n, what):
    buf = f.read(n)
    if len(buf) != n:
        raise TruncatedFile(f"dataset truncated while reading {what}")
    return buf


def read_dataset(path) -> FlowDataset:
    path = Path(path)
    with open(path, "rb") as f:
        if _read_exact(f, 4, "magic") != MAGIC:
            raise BadMagic(f"{path} is not a PFD1 dataset")
        t, l, h, w = struct.unpack("<4I", _read_exact(f, 16, "header"))
        mask = np.frombuffer(_read_exact(f, h * w, "geometry mask"),
                             dtype=np.uint8).reshape(h, w).astype(bool)
        payload = _read_exact(f, 4 * t * l * h * w, "payload")
        values = np.frombuffer(payload, dtype="<f4").reshape(t, l, h, w)
        if f.read(1):
            raise DimensionMismatch(f"{path} has trailing bytes")
    sidecar_path = path.with_suffix(path.suffix + ".json")
    meta = {}
    if sidecar_path.exists():
        with open(sidecar_path) as f:
            meta = json.load(f)
    return FlowDataset(
        values=values.copy(),
        geom_mask=mask,
        t0=float(meta.get("t0", 0.0)),
        dt_record=float(meta.get("dt_record", 0.0)),
        fidelity_label=meta.get("fidelity_label", ""),
        provenance=meta.get("provenance", {}),
    )


def datasets_equal(a: FlowDataset, b: FlowDataset) -> bool:
    return (
        a.values.shape == b.values.shape
        and np.array_equal(a.values, b.values)
        and np.array_equal(a.geom_mask, b.geom_mask)
        and a.t0 == b.t0
        and a.dt_record == b.dt_record
        and a.fidelity_label == b.fidelity_label
        and a.provenance == b.provenance
    )


def export_csv(dataset: FlowDataset, path):
    """Valid-cell rows as (t, layer, row, col, mdot); layer is 1-based."""
    rr, cc = np.nonzero(dataset.geom_mask)
    times = dataset.times
    with open(path, "w") as f:
        f.write("t,layer,row,col,mdot\n")
        for ti in range(dataset.n_steps):
            for lay in range(dataset.n_layers):
                vals = dataset.values[ti, lay]
                for r, c in zip(rr, cc):
                    f.write(f"{times[ti]:.9g},{lay + 1},{r},{c},"
                            f"{vals[r, c]:.9g}\n")
