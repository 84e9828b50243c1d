"""Desk-scale four-loop PWR lower-plenum flow lab.

Transient finite-volume simulation of a simplified vessel proxy (downcomer,
lower plenum, porous fuel-assembly core, four swirl inlets), assembly-level
mass-flow datasets, mesh-sensitivity error maps, and surrogate models
(masked 3D inpainting, one-step LSTM / ConvLSTM / DeepONet forecasting)
built on an in-repo reverse-mode autodiff engine.
"""

__version__ = "0.1.0"
