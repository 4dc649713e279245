"""Pick the SMO core at import: compiled extension unless unavailable or
``PENRT_PURE_PYTHON`` is set to a non-empty value."""

import os

from . import _smo_py

if os.environ.get("PENRT_PURE_PYTHON"):
    core = _smo_py
else:
    try:
        from . import _smo_ext as core
    except ImportError:  # extension not built
        core = _smo_py

BACKEND = core.NAME
OK, NONCONVERGED, SINGLE_CLASS = 0, 1, 2
