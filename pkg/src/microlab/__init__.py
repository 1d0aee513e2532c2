"""Confined-particle statistical mechanics at desk scale.

Two regions of a box share a truncated Fock space.  A preparation that
correlates them is expanded to first order, demixed into an uncorrelated
branch and a one-particle transfer branch, and the transfer branch is
read as a one-particle quantum system with its own state, observables,
free evolution and decoherence.
"""
__version__ = "0.1.0"

from .errors import (  # noqa: E402
    AdmissibilityError,
    ConvergenceError,
    DimensionError,
    ExponentOverflowError,
    LabError,
    NonHermitianError,
    ScenarioError,
    SpectralFloorError,
    StepSizeError,
)
from .fock import BOSON, FERMION, FockBasis, build_basis, ladder, number_op, one_body  # noqa: E402
from .modes import BoxSpec, ModeSet, box_eigenmodes, cell_kernel  # noqa: E402
from .preparation import (  # noqa: E402
    RelevantVariableSet,
    expanded_state,
    fit_state_parameters,
    gibbs_state,
    split_exponent,
)
from .demixing import (  # noqa: E402
    CorrelationTerm,
    MixtureDecomposition,
    build_transfer_term,
    cross_term_residual,
    equivalence_test,
    evolve_product,
    mixture_decompose,
)
from .microsystem import (  # noqa: E402
    OneParticleState,
    TransferredObservable,
    depletion,
    diagonalize_w,
    dressed_observable,
    effective_w,
    free_evolve,
    heisenberg_equivalence,
    reduced_expectation,
    sigma,
    transferred_observable,
)
from .decoherence import LindbladModel, lindblad_evolve, reduced_dynamics_oracle  # noqa: E402
