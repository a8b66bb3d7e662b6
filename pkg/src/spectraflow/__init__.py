"""Spectral flow of gapped quantum spin Hamiltonians at exact-diagonalization scale."""
from .backend import BACKEND
from .decay import DomainError, FFunction, MetricGraph, convolution_constant, interaction_norm
from .flow import (BandLimitError, FlowConfig, FlowConvergenceError, FlowResult, generator_D,
                   integrate_flow, lppl_experiment, multiplier_transform)
from .interaction import DerivativeError, InteractionFamily, Term
from .models import local_perturbation_family, qubit_family, tfim_family, volume_family, xy_family
from .operators import (LocalOperator, approximation_defect, commutator_norm, conditional_expectation,
                        embed, fatten, opnorm, pauli, pauli_string)
from .quasilocal import (LRConstants, QuasiLocalInteraction, VolumeSequence, build_psi, delta_n,
                         lr_alpha, lr_constants, lr_tau)
from .spectrum import GapClosed, SpectralData, diagonalize, track_sector
from .weight import WeightKernel, get_kernel, reproduce_constants

__version__ = "0.1.0"
