"""Fast covariance smoothing for sparsely observed functional data.

The core solver is a conjugate-gradient method restricted to the range of
an orthogonal projector (:mod:`trek.rek`), instantiated over block-diagonal
matrices with a lazy Khatri-Rao operator (:mod:`trek.blockops`) to smooth
second-moment and covariance tensors (:mod:`trek.smoother`).
"""

from ._backend import BACKEND
from .blockops import (
    BlockDiagMatrix,
    BlockLayout,
    LazyKhatriOperator,
    diag_elim,
    frobenius_dot,
    lazy_khatri_apply,
    odmat,
    odvec,
    offdiag_project,
)
from .kernels import (
    GaussianKernel,
    GramMatrix,
    LaplacianKernel,
    LinearKernel,
    PolynomialKernel,
    PrecomputedFrameKernel,
    eval_kernel,
    frame,
    gram,
    parse_kernel,
)
from .rek import SolveReport, SolverConfig, SolveStatus, rek_solve
from .simulate import ProcessSpec, sample_dataset, true_second_moment
from .smoother import (
    CovarianceFit,
    FitMode,
    FpcaResult,
    FunctionalDataset,
    MeanFit,
    evaluate_on_grid,
    fit_covariance_centered,
    fit_mean,
    fit_second_moment,
    fpca,
    recover_coefficients,
)

__version__ = "0.1.0"
