import os

# must precede the first numpy import: BLAS threading only hurts the small
# per-frequency kernels exercised here (spin-wait contention on few cores)
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")

import numpy  # noqa: E402,F401
