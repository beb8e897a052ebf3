"""Selects the compiled kernel backend, falling back to pure Python.

Set ``DIVKIT_BACKEND=python`` (or ``compiled``) to force a choice; the
default tries the compiled extension first.  Both backends implement
the same deterministic reduction contract and agree bit for bit.
"""

import os

from . import _kernels_py

_choice = os.environ.get("DIVKIT_BACKEND", "auto").lower()

if _choice == "python":
    _impl = _kernels_py
elif _choice == "compiled":
    from . import _kernels as _impl
else:
    try:
        from . import _kernels as _impl
    except ImportError:
        _impl = _kernels_py

BACKEND_NAME = _impl.BACKEND_NAME
SINGULAR_GUARD = _impl.SINGULAR_GUARD
SingularPairError = _impl.SingularPairError

ETA_TWO_POINT = _impl.ETA_TWO_POINT
ETA_UNIFORM = _impl.ETA_UNIFORM
POLICY_REDRAW = _impl.POLICY_REDRAW
POLICY_TRUNCATE = _impl.POLICY_TRUNCATE
POLICY_ALLOW = _impl.POLICY_ALLOW
REDRAW_CAP = _impl.REDRAW_CAP

pairwise_power_sum = _impl.pairwise_power_sum
wealth_trade_loop = _impl.wealth_trade_loop


def backend_name():
    """Name of the kernel backend in use ('compiled' or 'python')."""
    return BACKEND_NAME
