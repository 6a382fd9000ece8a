"""Spectral selection of spin-ensemble subensembles for quantum memory.

Modules: ``spectra`` (densities n(omega)), ``pulses`` (preparation
envelopes), ``propagator`` (selection spectra P(delta)), ``fidelity``
(coherence kernels and storage fidelity), ``transfer`` (field <-> ensemble
exchange), ``optimizer`` (constrained pulse design), ``scenario`` (error
budget and the NV case study) and ``cli``.
"""

__version__ = "0.1.0"

from .errors import (AccuracyError, ConfigError, DegenerateSubensembleError, DivergentMomentError,
                     GridCoverageError, InfeasibleProblem, InvalidArgument, SpinMemError)
from .fidelity import (CoherenceKernel, FidelityCurve, autocorr_fidelity, coherence, comb_fidelity_analytic,
                       fidelity, fidelity_from_kernel, subensemble_fidelity, subensemble_kernel, taylor_fidelity)
from .optimizer import OptimizationProblem, OptimizationResult, euler_lagrange_residual, optimize
from .propagator import SelectionSpectrum, excite_probability_approx, excite_probability_exact, selection_spectrum
from .pulses import CombProfile, Pulse, make_comb, make_sin, make_square, make_truncated_sinc
from .scenario import (ErrorBudget, ScenarioConfig, error_budget_closed_form, error_budget_numeric,
                       run_nv_case_study, variance_of_selected)
from .spectra import (Gaussian, Lorentzian, Rectangle, SpectralDensity, Tabulated, make_nv_triplet, total_spins)
from .transfer import TransferTrace, analytic_transfer_sin, discrete_oracle, solve_transfer
