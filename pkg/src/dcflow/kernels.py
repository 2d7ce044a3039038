"""Kernel backend selection.

Prefers the compiled Cython extension and falls back to the NumPy
implementation when the extension is missing.  Set ``DCFLOW_KERNELS=python``
to force the fallback (used by the backend benchmark and for debugging).
"""

import os

if os.environ.get("DCFLOW_KERNELS", "").lower() == "python":
    from . import _kernels_py as _impl

    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        from . import _kernels_py as _impl

        BACKEND = "python"

csr_matvec = _impl.csr_matvec
jacobi_pcg = _impl.jacobi_pcg
