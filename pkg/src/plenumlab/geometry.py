"""Vessel proxy geometry: assembly footprint map and classified Cartesian grid.

The flow domain is a box enclosing the vessel cross-section.  Curved walls
are rasterized cell-by-cell (stair-step, no cut cells): an annular downcomer
between the barrel and vessel radii, a flat-bottom lower plenum, and a block
of porous fuel-assembly columns over the 193-assembly footprint.  Four inlet
patches sit on the outer box walls at 90 degree intervals near the top of
the downcomer; outlet cells cap the top of the core.
"""

import math
import warnings
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np
from scipy import ndimage


class ResolutionTooCoarse(ValueError):
    """Grid too coarse: some assembly footprint received zero whole cells."""


class CellClass(IntEnum):
    SOLID = 0
    FLUID = 1
    POROUS = 2
    INLET = 3
    OUTLET = 4


# Octant-symmetric 15x15 core layout: row widths from top to bottom.
ROW_WIDTHS = (7, 11, 13, 13, 15, 15, 15, 15, 15, 15, 15, 13, 13, 11, 7)


@dataclass(frozen=True)
class AssemblyMap:
    """15x15 boolean footprint of the fuel assemblies.

    Attributes:
        valid: (15, 15) bool, True where an assembly exists
        count: number of valid cells (193)
        pitch: assembly pitch [m]
    """

    valid: np.ndarray
    count: int
    pitch: float

    def __post_init__(self):
        if self.valid.shape != (15, 15):
            raise ValueError("assembly map must be 15x15")


def build_assembly_map(pitch: float) -> AssemblyMap:
    """Build the standard 193-assembly footprint map.

    Each row is centered; the map is 4-fold rotationally symmetric and
    mirror symmetric.
    """
    if pitch <= 0:
        raise ValueError("pitch must be positive")
    valid = np.zeros((15, 15), dtype=bool)
    for row, width in enumerate(ROW_WIDTHS):
        lo = (15 - width) // 2
        valid[row, lo : lo + width] = True
    return AssemblyMap(valid=valid, count=int(valid.sum()), pitch=float(pitch))


@dataclass
class DomainConfig:
    """Parameters of the proxy flow domain.

    layout selects the construction:
      "proxy"     full vessel proxy (downcomer + plenum + porous core + inlets)
      "core-only" box of porous columns over the footprint, nothing else
      "open-box"  every cell fluid (degenerate, for plumbing tests)
    """

    nx: int = 48
    ny: int = 48
    nz: int = 96
    layout: str = "proxy"
    vessel_inner_radius: float = 2.1971  # [m]
    barrel_inner_radius: float = 1.8796  # [m]
    core_height: float = 4.059  # [m] lower nozzle to top of fuel
    plenum_height: float = 1.5  # [m] flat-bottom plenum proxy
    assembly_pitch: float = 0.215  # [m]
    inlet_patch_area: float = 0.49  # [m^2] per cold-leg patch
    inlet_patch_drop: float = 0.5  # [m] patch center below domain top
    metadata: dict = field(default_factory=dict)  # free-form provenance only

    def validate(self):
        if min(self.nx, self.ny, self.nz) < 1:
            raise ValueError("grid dims must be >= 1")
        if self.layout not in ("proxy", "core-only", "open-box"):
            raise ValueError(f"unknown layout {self.layout!r}")
        if self.assembly_pitch <= 0:
            raise ValueError("assembly_pitch must be positive")
        if self.layout == "proxy":
            if not (0 < self.barrel_inner_radius < self.vessel_inner_radius):
                raise ValueError("need 0 < barrel radius < vessel radius")
            if self.plenum_height <= 0 or self.core_height <= 0:
                raise ValueError("plenum and core heights must be positive")


@dataclass
class InletPatch:
    """One cold-leg inlet patch on an outer box wall.

    The patch-local frame is (e1, e2, normal): e1 = z_hat x normal along the
    wall, e2 = +z, normal points into the domain.  This choice is equivariant
    under 90 degree rotations of the domain about the vessel axis.
    """

    wall: str  # west|east|south|north
    normal: np.ndarray  # (3,)
    e1: np.ndarray
    e2: np.ndarray
    center: np.ndarray  # (3,) patch center on the wall [m]
    cells: np.ndarray  # (n, 3) int indices of inlet cells
    face_area: float  # area of one inlet face [m^2]
    half_width: float  # nominal patch half-width [m]


@dataclass
class Domain:
    """Classified structured grid plus assembly bookkeeping."""

    nx: int
    ny: int
    nz: int
    dx: float
    dy: float
    dz: float
    cell_class: np.ndarray  # (nx, ny, nz) uint8 of CellClass
    assembly_row: np.ndarray  # (nx, ny) int16, -1 where no assembly column
    assembly_col: np.ndarray  # (nx, ny) int16
    assembly_map: AssemblyMap
    z_core_inlet: float
    inlet_patches: list
    config: DomainConfig

    @property
    def shape(self):
        return (self.nx, self.ny, self.nz)

    @property
    def cell_volume(self) -> float:
        return self.dx * self.dy * self.dz

    def assembly_of_cell(self, i: int, j: int, k: int):
        """(row, col) for porous cells, None otherwise."""
        if self.cell_class[i, j, k] != CellClass.POROUS:
            return None
        r = int(self.assembly_row[i, j])
        if r < 0:
            return None
        return (r, int(self.assembly_col[i, j]))

    def footprint_columns(self):
        """Boolean (nx, ny): in-plane cells assigned to a valid assembly."""
        return self.assembly_row >= 0

    def to_provenance(self) -> dict:
        c = self.config
        return {
            "layout": c.layout,
            "grid": [self.nx, self.ny, self.nz],
            "cell_size": [self.dx, self.dy, self.dz],
            "z_core_inlet": self.z_core_inlet,
            "assembly_count": self.assembly_map.count,
            "cells": {
                cls.name.lower(): int((self.cell_class == cls).sum())
                for cls in CellClass
            },
        }


def _classify_footprint(cfg, cx, cy, xc, yc, amap):
    """Assign each in-plane cell center to the assembly containing it."""
    half = 15 / 2.0
    col_f = np.floor((xc[:, None] - cx) / cfg.assembly_pitch + half).astype(int)
    row_f = np.floor((yc[None, :] - cy) / cfg.assembly_pitch + half).astype(int)
    col = np.broadcast_to(col_f, (len(xc), len(yc))).copy()
    row = np.broadcast_to(row_f, (len(xc), len(yc))).copy()
    inside = (row >= 0) & (row < 15) & (col >= 0) & (col < 15)
    ok = np.zeros_like(inside)
    ok[inside] = amap.valid[row[inside], col[inside]]
    arow = np.where(ok, row, -1).astype(np.int16)
    acol = np.where(ok, col, -1).astype(np.int16)
    return arow, acol


def _build_inlet_patches(cfg, dx, dy, dz, lx, ly, lz, cell_class):
    cx, cy = lx / 2.0, ly / 2.0
    half = math.sqrt(cfg.inlet_patch_area) / 2.0
    zpc = lz - cfg.inlet_patch_drop
    zhat = np.array([0.0, 0.0, 1.0])
    specs = [
        ("west", np.array([1.0, 0.0, 0.0]), np.array([0.0, cy, zpc])),
        ("east", np.array([-1.0, 0.0, 0.0]), np.array([lx, cy, zpc])),
        ("south", np.array([0.0, 1.0, 0.0]), np.array([cx, 0.0, zpc])),
        ("north", np.array([0.0, -1.0, 0.0]), np.array([cx, ly, zpc])),
    ]
    patches = []
    zc = (np.arange(cfg.nz) + 0.5) * dz
    kz = np.nonzero(np.abs(zc - zpc) <= half)[0]
    for wall, normal, center in specs:
        e1 = np.cross(zhat, normal)
        if wall in ("west", "east"):
            tang = (np.arange(cfg.ny) + 0.5) * dy
            jt = np.nonzero(np.abs(tang - cy) <= half)[0]
            i0 = 0 if wall == "west" else cfg.nx - 1
            cells = [(i0, j, k) for j in jt for k in kz
                     if cell_class[i0, j, k] == CellClass.FLUID]
            area = dy * dz
        else:
            tang = (np.arange(cfg.nx) + 0.5) * dx
            it = np.nonzero(np.abs(tang - cx) <= half)[0]
            j0 = 0 if wall == "south" else cfg.ny - 1
            cells = [(i, j0, k) for i in it for k in kz
                     if cell_class[i, j0, k] == CellClass.FLUID]
            area = dx * dz
        if not cells:
            raise ResolutionTooCoarse(f"inlet patch {wall} captured no cells")
        arr = np.array(cells, dtype=np.int64)
        cell_class[arr[:, 0], arr[:, 1], arr[:, 2]] = CellClass.INLET
        patches.append(
            InletPatch(wall=wall, normal=normal, e1=e1, e2=zhat.copy(),
                       center=center, cells=arr, face_area=area,
                       half_width=half)
        )
    return patches


def _check_no_bypass(cell_class, plenum_mask):
    """No inlet->outlet path may avoid both the plenum and the core."""
    passable = np.isin(cell_class, (CellClass.FLUID, CellClass.INLET,
                                    CellClass.OUTLET)) & ~plenum_mask
    labels, n = ndimage.label(passable)
    if n == 0:
        return
    inlet_labels = set(np.unique(labels[cell_class == CellClass.INLET])) - {0}
    outlet_labels = set(np.unique(labels[cell_class == CellClass.OUTLET])) - {0}
    if inlet_labels & outlet_labels:
        raise ValueError("geometry has an inlet->outlet path bypassing "
                         "plenum and core")


def build_domain(config: DomainConfig) -> Domain:
    """Build and classify the proxy domain.

    Raises ResolutionTooCoarse if any assembly footprint receives zero whole
    cells in-plane.  A resolution below 2 cells per assembly pitch only
    warns: the grid still builds as long as every assembly owns a column.
    """
    cfg = config
    cfg.validate()
    amap = build_assembly_map(cfg.assembly_pitch)

    if cfg.layout == "open-box":
        lx = ly = 2.0 * cfg.vessel_inner_radius
        lz = cfg.plenum_height + cfg.core_height
        dx, dy, dz = lx / cfg.nx, ly / cfg.ny, lz / cfg.nz
        cell_class = np.full((cfg.nx, cfg.ny, cfg.nz), CellClass.FLUID,
                             dtype=np.uint8)
        arow = np.full((cfg.nx, cfg.ny), -1, dtype=np.int16)
        return Domain(cfg.nx, cfg.ny, cfg.nz, dx, dy, dz, cell_class,
                      arow, arow.copy(), amap, 0.0, [], cfg)

    if cfg.layout == "core-only":
        lx = ly = 15.0 * cfg.assembly_pitch
        lz = cfg.core_height
        dx, dy, dz = lx / cfg.nx, ly / cfg.ny, lz / cfg.nz
        xc = (np.arange(cfg.nx) + 0.5) * dx
        yc = (np.arange(cfg.ny) + 0.5) * dy
        arow, acol = _classify_footprint(cfg, lx / 2, ly / 2, xc, yc, amap)
        cell_class = np.zeros((cfg.nx, cfg.ny, cfg.nz), dtype=np.uint8)
        cell_class[arow >= 0, :] = CellClass.POROUS
        _require_all_assemblies(arow, acol, amap)
        _warn_if_coarse(dx, dy, cfg.assembly_pitch)
        return Domain(cfg.nx, cfg.ny, cfg.nz, dx, dy, dz, cell_class,
                      arow, acol, amap, 0.0, [], cfg)

    # proxy layout
    lx = ly = 2.0 * cfg.vessel_inner_radius
    lz = cfg.plenum_height + cfg.core_height
    dx, dy, dz = lx / cfg.nx, ly / cfg.ny, lz / cfg.nz
    cx, cy = lx / 2.0, ly / 2.0
    xc = (np.arange(cfg.nx) + 0.5) * dx
    yc = (np.arange(cfg.ny) + 0.5) * dy
    zc = (np.arange(cfg.nz) + 0.5) * dz
    r2 = (xc[:, None] - cx) ** 2 + (yc[None, :] - cy) ** 2  # (nx, ny)
    in_vessel = r2 <= cfg.vessel_inner_radius**2
    in_annulus = in_vessel & (r2 >= cfg.barrel_inner_radius**2)

    arow, acol = _classify_footprint(cfg, cx, cy, xc, yc, amap)
    in_core = arow >= 0

    above_plenum = zc >= cfg.plenum_height  # (nz,)
    cell_class = np.zeros((cfg.nx, cfg.ny, cfg.nz), dtype=np.uint8)
    # plenum: everything inside the vessel below the core plate
    cell_class[in_vessel[:, :, None] & ~above_plenum[None, None, :]] = \
        CellClass.FLUID
    # downcomer annulus above the plenum
    cell_class[in_annulus[:, :, None] & above_plenum[None, None, :]] = \
        CellClass.FLUID
    # porous assembly columns over the footprint, full core height
    cell_class[in_core[:, :, None] & above_plenum[None, None, :]] = \
        CellClass.POROUS
    # outlet caps the top of the core
    top = cell_class[:, :, -1]
    top[top == CellClass.POROUS] = CellClass.OUTLET

    _require_all_assemblies(arow, acol, amap)
    _warn_if_coarse(dx, dy, cfg.assembly_pitch)

    k_core = int(np.argmax(above_plenum))
    z_core_inlet = k_core * dz
    if lz - z_core_inlet < 8 * 0.5:
        raise ValueError("core region shorter than the 9-layer probe stack")

    patches = _build_inlet_patches(cfg, dx, dy, dz, lx, ly, lz, cell_class)
    plenum_mask = in_vessel[:, :, None] & ~above_plenum[None, None, :]
    _check_no_bypass(cell_class, plenum_mask)

    return Domain(cfg.nx, cfg.ny, cfg.nz, dx, dy, dz, cell_class,
                  arow, acol, amap, z_core_inlet, patches, cfg)


def _require_all_assemblies(arow, acol, amap):
    got = np.zeros((15, 15), dtype=bool)
    m = arow >= 0
    got[arow[m], acol[m]] = True
    missing = int(amap.valid.sum()) - int((got & amap.valid).sum())
    if missing:
        raise ResolutionTooCoarse(
            f"{missing} assembly footprints received zero whole cells")


def _warn_if_coarse(dx, dy, pitch):
    if max(dx, dy) > pitch / 2.0:
        warnings.warn(
            "in-plane resolution below 2 cells per assembly pitch; "
            "footprints are rasterized very coarsely",
            stacklevel=3,
        )
