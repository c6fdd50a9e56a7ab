"""Polarization-qubit state preparation, tomography and entanglement analytics."""

__version__ = "0.1.0"

from .states import (  # noqa: E402,F401
    DensityMatrix,
    concurrence,
    fidelity,
    linear_entropy,
    mems,
    nonmax_entangled,
    pure_state,
    purity,
    tangle,
    vn_entropy,
    werner,
)
