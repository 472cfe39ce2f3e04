"""Ground-state engine for infinite 1D/2D lattice models.

Imaginary-time evolution on iMPS (1D) and iPEPS (2D) tensor networks, with
canonical forms, gauge fixing, corner-transfer-matrix environments and an
environment-recycling accelerator built on a renormalized evolution gate.
"""

__version__ = "0.1.0"
