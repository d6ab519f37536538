"""Block eigensolvers and angle-free Ritz value bounds.

Submodules
----------
linalg     orthonormalization, small eigensolvers, Rayleigh quotients, angles
operators  spectra, symmetric operators, pencils, Chebyshev filters
rng        portable xoshiro256++ generator
solvers    restarted block Lanczos / Davidson, filtered and shift-invert iterations
bounds     bound formulas and the per-step bound tracker
lab        built-in experiments, configs, CSV and plot output
"""
from .bounds import (AssumptionError, BoundCurve, BoundFactor, BoundParams, BoundValue,
                     ErrorMeasure, bound_angle_dependent, bound_classical, bound_multistep,
                     bound_step_consecutive, bound_step_nonconsecutive, bound_tracker_run,
                     deflation_bound, error_from_measure_bound, intersection_subspace,
                     measure, pencil_tracker_run, shift_invert_bound, sigma_factor,
                     t_index_select)
from .lab import (ExperimentConfig, ExperimentResult, emit_csv, emit_plot_script,
                  load_config, parse_config, run_experiment, spectrum_example1,
                  spectrum_example2)
from .linalg import (ConvergenceError, MetricError, RankDeficiencyError,
                     generalized_eig_small, metric_orthonormalize, orthonormalize,
                     principal_angle_tan, rayleigh_quotient, sym_eig_small)
from .operators import (ChebyshevFilter, DenseOperator, DiagonalOperator, HermitianPencil,
                        Spectrum, apply_block, chebyshev_filter_apply, chebyshev_log_value,
                        load_spectrum, pencil_to_standard, pencil_to_standard_interior,
                        save_spectrum, shift_invert_apply)
from .rng import Xoshiro256pp, random_block
from .solvers import (BlockKrylovState, DeflationSet, IterationTrace, RitzDecomposition,
                      deflate_and_continue, krylov_extend, krylov_init, make_deflation_set,
                      ritz_pairs, run_block_shift_invert, run_filtered_iteration,
                      run_restarted_block_davidson, run_restarted_block_lanczos)

__version__ = "0.1.0"
