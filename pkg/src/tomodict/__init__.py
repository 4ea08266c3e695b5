"""Tensor dictionary learning and tomographic reconstruction via the
t-product.

Subpackages:

- :mod:`tomodict.tensor_core`: third-order tensor algebra (t-product,
  transpose, per-frequency SPD solves, TNS1 file format).
- :mod:`tomodict.patch_image`: image/patch-tensor conversions, the pixel
  permutation and the patch-boundary difference operator.
- :mod:`tomodict.dict_learn`: non-negative sparse tensor factorization by
  ADMM, plus non-negative patch coding and the mean approximation error.
- :mod:`tomodict.tomo_model`: parallel-beam system matrix, noisy sinogram
  simulation and a Tikhonov baseline.
- :mod:`tomodict.recon_solver`: dictionary-regularized reconstruction by
  accelerated proximal gradient with sparsity / sparsity+low-rank priors.
- :mod:`tomodict.metrics_eval`: relative error, SSIM, density and
  compressibility.
- :mod:`tomodict.cli`: the ``tpc`` pipeline front end.
"""

import os

# The per-frequency kernels work on small matrices where BLAS threading only
# adds spin-wait contention (20x slowdowns on 2-core hosts).  Applied only if
# numpy is not yet loaded and the user has not chosen a value.
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")

from . import (  # noqa: F401
    dict_learn,
    metrics_eval,
    patch_image,
    recon_solver,
    tensor_core,
    textures,
    tomo_model,
)
from .tensor_core import (  # noqa: F401
    NumericalError,
    circ,
    fold,
    identity_tensor,
    load_tensor,
    norms,
    save_tensor,
    squeeze,
    tprod,
    tsolve_spd,
    ttranspose,
    twist,
    unfold,
)

__version__ = "0.1.0"
