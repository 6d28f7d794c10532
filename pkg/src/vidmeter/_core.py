"""Kernel backend selection.

The compiled extension is used when it imports; set ``VIDMETER_PURE=1`` to
force the numpy fallback.
"""

import os

from . import _pykernels

BACKEND = "python"
kernels = _pykernels

if os.environ.get("VIDMETER_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels
    except ImportError:
        pass
    else:
        kernels = _kernels
        BACKEND = "cython"

ap_from_flags = kernels.ap_from_flags
xinfap_scan = kernels.xinfap_scan
signflip_exact_count = kernels.signflip_exact_count
