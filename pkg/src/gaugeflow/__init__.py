"""Canonicalization-gauged generative modeling toolkit.

Three layers: a molecular canonicalization engine (permutation and rotation
gauges), a small flow-matching trainer/sampler that operates on the canonical
slice, and a Monte Carlo lab that checks the variance identities the slice
construction relies on.
"""

__version__ = "0.1.0"

from . import canonicalizer, coupling, molecule, priors, sampler, symgroup, theorylab
from .molecule import MoleculeState
from .symgroup import FiniteGroupSpec, GroupElement

__all__ = [
    "__version__",
    "MoleculeState",
    "GroupElement",
    "FiniteGroupSpec",
    "canonicalizer",
    "coupling",
    "molecule",
    "priors",
    "sampler",
    "symgroup",
    "theorylab",
]
