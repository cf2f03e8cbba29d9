"""Backend selection for the hot loops.

The compiled extension ``galign._ckernels`` is used when it imports;
otherwise the numpy fallback in ``galign._pykernels`` takes over. Setting
``GALIGN_PURE_PYTHON=1`` forces the fallback.
"""

import os

from galign import _pykernels

BACKEND = "python"
_impl = _pykernels

if not os.environ.get("GALIGN_PURE_PYTHON"):
    try:
        from galign import _ckernels as _impl  # noqa: F811

        BACKEND = "cython"
    except ImportError:  # extension not built
        pass

python = _pykernels
compiled = _impl if BACKEND == "cython" else None

lap_maximize = _impl.lap_maximize
segment_sum = _impl.segment_sum
gated_forward = _impl.gated_forward
gated_backward = _impl.gated_backward
