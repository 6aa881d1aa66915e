"""Circle-method decomposition of the multipliers m_j: Weyl sums, major arcs, main terms and errors."""

from .arcs import EXPLORATORY, PAPER, ArcParameters, major_arc_contains, major_arcs_disjoint
from .multipliers import (
    ArcGrid,
    MainTermSpec,
    UniformGrid,
    approximation_error,
    error_E_j,
    m_j,
    main_term_L,
    minor_arc_kernel,
)
from .oscillatory import phi_j, phi_j_many
from .region import proven_region
from .weyl import ReducedFraction, enumerate_fractions, weyl_decay_fit, weyl_sum, weyl_sum_crt

__all__ = [
    "EXPLORATORY", "PAPER", "ArcParameters", "major_arc_contains", "major_arcs_disjoint",
    "ArcGrid", "MainTermSpec", "UniformGrid", "approximation_error", "error_E_j", "m_j", "main_term_L",
    "minor_arc_kernel", "phi_j", "phi_j_many", "proven_region",
    "ReducedFraction", "enumerate_fractions", "weyl_decay_fit", "weyl_sum", "weyl_sum_crt",
]
