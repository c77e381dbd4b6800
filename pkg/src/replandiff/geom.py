"""Backend selection for the segment/grid kernels.

The compiled extension is used when it was built; set ``RDM_PURE_PYTHON=1``
to force the reference implementation.
"""

import os

import numpy as np

from . import _geom_py

BACKEND = "python"
_impl = _geom_py

if os.environ.get("RDM_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _geom_ext as _impl  # noqa: F811

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _geom_py


def segment_contact(blocked, x0, y0, x1, y1, cell):
    return _impl.segment_contact(blocked, float(x0), float(y0), float(x1), float(y1), float(cell))


def first_violation(blocked, xy, cell):
    xy = np.ascontiguousarray(xy, dtype=np.float64)
    return int(_impl.first_violation(blocked, xy, float(cell)))
