"""Randomized SVD and Nystrom approximation of integral operators in orthonormal polynomial bases."""
from .basis import BasisSpec, expand_function, expand_kernel, gauss_legendre, legendre_orthonormal_eval
from .kernels import KERNELS, Kernel, get_kernel
from .operator import (ReferenceSVD, ResolutionError, adaptive_sketch, choose_m, discretization_error,
                       discretize, reference_svd)
from .quasimat import DiagOp, QuasiMatrix, dense_svd, inner, orthonormalize, project, pseudoinverse
from .rng import gaussian_matrix
from .sketch import (LowRankApprox, covariance_rsvd, discrete_rsvd, hs_error, idealized_rsvd, nystrom_discrete,
                     nystrom_idealized, randomized_svd, sample_kl, trace_error)

__version__ = "0.1.0"
