"""Three-photon GHZ state tomography.

Modules:

* ``qlin``: states, operators, tensor products and partial traces (big-endian).
* ``tomo``: the 64-setting measurement model, count simulation and count tables.
* ``source``: GHZ preparation from photon pairs and the four-fold dip model.
* ``reconstruct``: linear inversion, maximum likelihood and Monte Carlo errors.
* ``analysis``: fidelity, witness, Mermin parameter and pairwise concurrence.
* ``cli``: the ``ghztomo`` command.
"""

from .errors import DataError, DegenerateProjectionError, PhysicalityError, TomographyError
from .qlin import GHZ, DensityMatrix, PureState, depolarized
from .reconstruct import linear_invert, mle_reconstruct, monte_carlo
from .tomo import TomographySet, simulate_counts

__version__ = "0.1.0"

__all__ = [
    "GHZ",
    "DataError",
    "DegenerateProjectionError",
    "DensityMatrix",
    "PhysicalityError",
    "PureState",
    "TomographyError",
    "TomographySet",
    "depolarized",
    "linear_invert",
    "mle_reconstruct",
    "monte_carlo",
    "simulate_counts",
]
