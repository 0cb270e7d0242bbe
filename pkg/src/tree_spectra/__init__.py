"""Counting negative eigenvalues of ``-Delta - alpha V`` on regular metric trees."""

from .errors import (
    DomainError,
    HorizonExceededError,
    InapplicableError,
    IncompleteDataError,
    InconclusiveError,
    SizeCapError,
    TreeSpectraError,
    UnsupportedOperationError,
)
from .tree import (
    GlobalDimension,
    RegularTree,
    TreeClass,
    TreeKind,
    b_regular,
    branching_function,
    classify,
    explicit_tree,
    global_dimension,
    harmonic_profile,
    reduced_height,
    tree_from_dict,
)
from .potentials import (
    Constant,
    DecayEnvelope,
    Piece,
    Power,
    SymmetricPotential,
    Tabulated,
    eta_power_potential,
    eta_sequence,
    example_potential,
    indicator,
    l1_norm,
    neumann_correction,
    piecewise,
    potential_from_dict,
    weyl_coefficient,
    zero_potential,
)
from .hardy import (
    bound_rhs,
    hardy_constants,
    weak_quasinorm_radial,
    weak_quasinorm_sequence,
)

__version__ = "0.1.0"
