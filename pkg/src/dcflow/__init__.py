"""dcflow: inexact adaptive difference-of-convex optimization toolkit.

Core pieces: a sparse linear-algebra kernel with a compiled fast path
(:mod:`dcflow.linalg`, :mod:`dcflow.kernels`), the adaptive DC engine
(:mod:`dcflow.dca`), a closed-form verification problem (:mod:`dcflow.toy`),
P1/P0 finite elements on the unit square (:mod:`dcflow.fem`), the sparse
elliptic control application (:mod:`dcflow.control`,
:mod:`dcflow.active_set`), and the experiment harness with the ``dcflow``
command line (:mod:`dcflow.experiments`, :mod:`dcflow.cli`).
"""

__version__ = "0.1.0"
