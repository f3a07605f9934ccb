"""Matrix information quantities, matrix-entropy SSL losses and collapse metrics."""

from .errors import *  # noqa: F401,F403
from .linalg import (
    EmbeddingBatch,
    Spectrum,
    centered_cross_cov,
    centering_matrix,
    is_psd,
    jacobi_eigh,
    logdet_spd,
    matrix_exp_series,
    matrix_log_spectral,
    matrix_log_taylor,
    normalize_columns,
    sym_eig,
    symmetrize,
)
from .matinfo import erank, erank_or_zero, matrix_entropy, mce, mkl, vne
from .losses import (
    LOSS_NAMES,
    LossConfig,
    TokenStep,
    alignment_loss,
    evaluate_loss,
    loss_decomposition,
    matrix_llm_loss,
    matrix_ssl_kl_loss,
    matrix_ssl_loss,
    mec_loss,
    mse_alignment,
    tcr_loss,
    uniformity_loss,
)
from .collapse import (
    CollapseReport,
    LabeledEmbeddings,
    build_simplex_etf,
    collapse_report,
    etf_erank_check,
    gram_erank,
    inter_class_erank,
    intra_class_erank,
)
from .optim import (
    DescentConfig,
    Trajectory,
    descend_matrix_ssl,
    descend_mce_to_p,
    finite_difference_gradient,
    grad_matrix_ssl,
    grad_mce_q_commuting,
    grad_tr_plogq,
    loss_and_grad,
    random_views,
    verify_theorem_4_1,
)

__version__ = "0.1.0"
