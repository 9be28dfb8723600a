"""Non-orthogonal three-sided diagonalization of order-3 tensors."""

from .blocks import (BlockDetector, BlockStructure, SimilarityMatrices, apply_block_permutation,
                     block_offdiagonal_mass, cluster_blocks, rcm_blocks, rcm_order, similarity)
from .btd import AlsResult, BtdModel, als_refine, from_tedia
from .perturbation import (PerturbationReport, analyze, assemble_h1, assemble_h2, covariance,
                           predict_msae, stability_check)
from .rotation import (RotationParams, apply_rotation, elementary_rotation, pair_gradient,
                       pair_hessian, solve_step)
from .scaling import InfimumZero, SliceEnergies, optimal_scaling, scaling_optimality_residual, slice_energies
from .sweep import (TEDIA, DiagonalizationResult, NonFiniteError, TediaConfig, TransformSet,
                    brc_residuals, check_brc, residual_fit, tedia)
from .synth import (ScenarioConfig, add_noise, colinear_matrix, make_block_scenario,
                    make_cp_scenario, run_campaign, subspace_angle)
from .tensor import (diagonal_tensor, e01_tensor, fold, frobenius_norm, mode_product,
                     multi_mode_product, off, off_norm, slice_vecs, unfold)
from .tucker import TuckerCompressor, TuckerResult, hooi_compress

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
