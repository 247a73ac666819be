"""radoncurv: curvature analysis for smooth families of submanifolds.

Symbolic core: truncated power series (`jets`), vector fields and flows
(`vfields`), free nilpotent Lie algebras and groups (`nilpotent`), and the
finite-order curvature verdicts (`curvature`).  Geometric layer: lifting to a
free frame, exponential charts, quasi-distances and dilations (`freegeom`).
Numeric layer: discretized averaging/singular operators and measurement
experiments (`oplab`).  The `cli` module exposes everything as a command-line
tool.
"""

__version__ = "0.1.0"

from . import jets, vfields, nilpotent, curvature, freegeom, oplab  # noqa: F401,E402

__all__ = [
    "jets",
    "vfields",
    "nilpotent",
    "curvature",
    "freegeom",
    "oplab",
    "__version__",
]
