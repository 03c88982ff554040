"""Backend selection for the hot CSR kernels.

The compiled extension is preferred; the pure-Python twin is used when the
extension is missing or when ``MDAUX_FORCE_PYTHON_KERNELS=1`` is set (mainly
for benchmarking and cross-checking the two implementations).
"""

import os

if os.environ.get("MDAUX_FORCE_PYTHON_KERNELS", "0") == "1":
    from . import _kernels_py as _impl

    HAVE_COMPILED = False
else:
    try:
        from . import _kernels_c as _impl

        HAVE_COMPILED = True
    except ImportError:
        from . import _kernels_py as _impl

        HAVE_COMPILED = False

BACKEND = "cython" if HAVE_COMPILED else "python"

csr_matvec = _impl.csr_matvec
gs_forward = _impl.gs_forward
gs_backward = _impl.gs_backward
