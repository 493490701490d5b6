"""Shrinkage estimators of kernel mean embeddings and covariance operators."""

from kmshrink._errors import (
    DegenerateGramError,
    DegenerateSampleError,
    InputError,
    KmshrinkError,
    NumericalError,
    SingularSystemError,
)
from kmshrink.centering import CenteredGram, center_test, center_train, centered_test_diag
from kmshrink.estimators import (
    KernelMeanEstimate,
    f_kmse,
    f_kmse_estimate,
    f_kmse_spectral,
    kme,
    rkhs_dist_sq,
    rkhs_inner,
    s_kmse,
    s_kmse_weights,
    shrink_toward,
    uniform_weights,
)
from kmshrink.kernels import KernelFamily, KernelSpec, cross_gram, eval_kernel, gram, median_heuristic
from kmshrink.model_selection import (
    GramStats,
    LoocvMethod,
    SearchConfig,
    f_kmse_loocv_naive,
    f_kmse_loocv_refit,
    f_kmse_loocv_score,
    f_kmse_select,
    gram_stats,
    s_kmse_select,
)
from kmshrink.operators import CovOpSource, KpcaModel, cose_weights, distribution_gram, kpca_fit, kpca_reconstruction_error
from kmshrink.spectral import SpectralDecomposition, generalized_kpca_eig, sym_eig

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")] + ["__version__"]
