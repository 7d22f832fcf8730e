"""Discriminative correlation analysis for paired 2D (matrix-valued) data.

Two-view samples ``(X_i, Y_i)`` are projected bilinearly with 2DCCA, the
projected maps are stacked, and a bilinear Fisher discriminant is learned in
both the range space and the null space of the within-class scatter.
"""
from .baselines import LinearModel, fit_2dlda, fit_2dpca, fit_lda, fit_pca
from .cdtrl import (Branch, CdtrlModel, CdtrlOpts, StackedMaps, fit_cdtrl, side_scatter,
                    stack_maps, transform)
from .correlation import (ProjectionPair, SolverOpts, WeightMatrix, fit_2dcca, fit_cca,
                          fit_l2dcca, heat_kernel_weights, weight_matrix)
from .data import (CenteredPair, LabeledPairSet, LabeledView, PairBatch, SynthSpec,
                   center_pair, gen_pose_variants, gen_synthetic, haar_dwt2,
                   load_image_dir, load_view_dir, replicate_references, write_image_dir)
from .errors import (EmptyInputError, NumericError, PairingError, PlanarCDAError,
                     ProtocolError, ShapeError, SingularityError, ValidationError)
from .evaluation import EvalRow, MethodSpec, ar_protocol, loo_cv, nn_classify, split_eval
from .linalg import gen_eig, null_space, range_space, sym_eig, trace_ratio
from .serialize import load_model, save_model

__version__ = "0.1.0"
