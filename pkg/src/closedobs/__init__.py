"""Coarse time-autonomous models built from observation time series.

The pipeline: delay-embed scalar or vector observations
(:mod:`closedobs.embedding`), find a small set of independent spectral
coordinates on the delay vectors (:mod:`closedobs.dmaps`), and fit
scattered-data interpolants (:mod:`closedobs.interp`) for the three maps
that make up a runnable model (:mod:`closedobs.model`): initial input to
coordinates, coordinate increment per step, and coordinates back to
observations.  :mod:`closedobs.generators` provides the reference
systems, :mod:`closedobs.validate` the quantitative checks, and
:mod:`closedobs.cli` a command-line front end.
"""

from ._kernels import BACKEND
from .errors import (BuildError, ClosedObsError, ExtrapolationError,
                     FormatError, InvariantError, ModelFileError)

__version__ = "0.1.0"

__all__ = ["BACKEND", "ClosedObsError", "FormatError", "InvariantError",
           "BuildError", "ExtrapolationError", "ModelFileError",
           "__version__"]
