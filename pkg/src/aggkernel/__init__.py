"""Identification of nonlocal interaction kernels in aggregation-diffusion
dynamics from discrete, noisy density trajectories.

The workflow: integrate (or load) a density trajectory, downsample it to an
observation mesh and optionally corrupt it, assemble the quadratic loss
system (A, b) over a radial dictionary, solve for a sparse coefficient
vector, and prune the support via re-simulation when the dictionary is
coherent.  `presets` bundles ready-made configurations; `pipeline` chains
the stages with caching.
"""

from .assembly import (GKernel, LinearSystem, assemble_direct, assemble_G,
                       assemble_via_G, fd_space, fd_time, load_system,
                       save_system)
from .errors import (AggKernelError, BudgetError, IndexAlignmentError,
                     InvalidInputError, InvalidParameterError, PositivityError,
                     SolverDivergenceError)
from .fv import SolverConfig, cfl_timestep, solve, velocity_from_state
from .grids import (DensityTrajectory, Grid1D, Grid2D, cell_volume,
                    export_csv, load_trajectory, make_grid_1d, make_grid_2d,
                    restrict, save_trajectory)
from .metrics import (NoiseTrial, StabilityProbe, convergence_order,
                      dictionary_error_functional, error_functional,
                      reconstruction_error, stability_sweep,
                      summarize_noise_sweep, wasserstein2_1d)
from .models import (BasisSet, DiffusionLaw, ModelSpec, PotentialFn,
                     RadialKernel, basis_gaussian, basis_piecewise,
                     basis_polynomial, gaussian_sum_potential, hat_attraction,
                     kernel_from_coefficients, quadratic_attraction,
                     scaled_kernel, true_coefficients)
from .noise import NoiseSpec, add_noise, noise_sigma
from .pipeline import (RunResult, run, simulate, observe, assemble,
                       solve_sparse, sweep_noise)
from .presets import (ExperimentConfig, config_from_dict, get_preset,
                      initial_density, list_presets)
from .pruning import (CandidateScore, PruningReport, cluster_candidates,
                      enumerate_subsets, prune, score_subsets, tee)
from .solvers import (SparseSolution, coherence, least_squares, partinv,
                      pinv_solve, residual_error, restricted_ls, stls,
                      subspace_pursuit)

__version__ = "0.1.0"
