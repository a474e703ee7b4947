"""Kernel backend selection.

The compiled Cython module is used when it imports; otherwise the pure-Python
twin.  Set ``FVSPINE_BACKEND=python`` to force the fallback.
"""

import os

from . import _pykernels

python_kernels = _pykernels

try:
    from . import _ckernels as compiled_kernels
except ImportError:  # extension not built
    compiled_kernels = None

if os.environ.get("FVSPINE_BACKEND", "").lower() == "python" or compiled_kernels is None:
    kernels = _pykernels
else:
    kernels = compiled_kernels

BACKEND = kernels.BACKEND
