"""Kernel selection: compiled ``_core`` when importable, else ``_pure``.

Set ``SPP_PURE=1`` to force the pure-Python kernels.
"""

import logging
import os

logger = logging.getLogger(__name__)

if os.environ.get("SPP_PURE"):
    from . import _pure as _impl

    BACKEND = "pure"
else:
    try:
        from . import _core as _impl

        BACKEND = "compiled"
    except ImportError:  # pragma: no cover - depends on build
        from . import _pure as _impl

        BACKEND = "pure"
        logger.debug("compiled kernels unavailable, using pure-Python fallback")

project = _impl.project
support_sums = _impl.support_sums
cd_sweep_squared = _impl.cd_sweep_squared
cd_sweep_logistic = _impl.cd_sweep_logistic
