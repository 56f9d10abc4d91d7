"""Quantum interfaces between light and atomic ensembles.

Submodules:

``gaussian_core``
    Gaussian states, channels, homodyne conditioning and feedback.
``interface_maps``
    Input-output maps of the three light-atom interactions and their couplings.
``protocols``
    Squeezing, entanglement, memory and teleportation built from those maps.
``maxwell_bloch``
    Space-time propagation, analytic kernels and EIT storage optimisation.
``fock_sim``
    Photon-counting protocols in truncated Fock space.
``atomic_structure``
    6j symbols and polarizability tensor coefficients.
``cli``
    Scenario runner behind the ``ensemble-interface`` command.
"""

from . import atomic_structure, fock_sim, gaussian_core, interface_maps, maxwell_bloch, protocols

__version__ = "1.0.0"

__all__ = ["atomic_structure", "fock_sim", "gaussian_core", "interface_maps", "maxwell_bloch", "protocols", "__version__"]
