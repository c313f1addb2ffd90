"""Select the compiled kernels when available, else the numpy fallback."""

import os

if os.environ.get("KINETIC_SPACES_BACKEND", "").lower() == "python":
    from . import _core_py as core
else:
    try:
        from . import _core as core
    except ImportError:  # extension not built
        from . import _core_py as core

NAME = core.NAME
interp_multilinear = core.interp_multilinear
weighted_pow_diff = core.weighted_pow_diff
