from .cib import CibConfig, bootstrap_deltas, cib_select, percentile_ci
from .cmi import cmi, cmi_select, discretize, entropy, entropy_of, greedy_cmi, joint_codes, mutual_information
from .glasso import (
    GlassoConvergenceError,
    GlassoModel,
    design_matrix,
    glasso_fit,
    glasso_path,
    glasso_select,
    group_soft_threshold,
    kkt_residual,
    lambda_grid,
    lambda_max,
)
from .pfi import permute_feature, pfi_scores
from .report import SelectionReport, vote, write_selection_matrix
