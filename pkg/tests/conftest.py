import numpy as np
import pytest

from plenumlab.geometry import (
    CellClass,
    Domain,
    DomainConfig,
    build_assembly_map,
    build_domain,
)


def make_column_domain(nz=40, dz=0.1, pitch=0.215):
    """1-cell-wide porous column: inlet cell, porous stack, outlet cell."""
    cfg = DomainConfig(nx=1, ny=1, nz=nz, layout="core-only")
    amap = build_assembly_map(pitch)
    cls = np.full((1, 1, nz), CellClass.POROUS, dtype=np.uint8)
    cls[0, 0, 0] = CellClass.INLET
    cls[0, 0, -1] = CellClass.OUTLET
    arow = np.array([[7]], dtype=np.int16)
    acol = np.array([[7]], dtype=np.int16)
    return Domain(1, 1, nz, pitch, pitch, dz, cls, arow, acol, amap,
                  0.0, [], cfg)


@pytest.fixture(scope="session")
def small_proxy_domain():
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return build_domain(DomainConfig(nx=24, ny=24, nz=48))


@pytest.fixture(scope="session")
def assembly_map():
    return build_assembly_map(0.215)
