"""Backend selection for the numerical kernels.

The compiled extension is used when it imports cleanly; otherwise the
pure-Python module takes over.  Setting ``RELIABLE_FW_PURE=1`` in the
environment forces the fallback (handy for benchmarks and for checking
that both paths agree).
"""
import logging
import os

from . import _fallback
from ._fallback import LP_INFEASIBLE, LP_OPTIMAL, LP_UNBOUNDED, dedupe

logger = logging.getLogger(__name__)

BACKENDS = {"python": _fallback}

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None
else:
    BACKENDS["compiled"] = _compiled

if _compiled is not None and os.environ.get("RELIABLE_FW_PURE", "") not in ("1", "true", "yes"):
    BACKEND_NAME = "compiled"
else:
    BACKEND_NAME = "python"
_backend = BACKENDS[BACKEND_NAME]
logger.debug("reliable_fw kernels: %s", BACKEND_NAME)

__all__ = [
    "BACKENDS", "BACKEND_NAME", "LP_OPTIMAL", "LP_INFEASIBLE", "LP_UNBOUNDED",
    "get_backend", "lp_min", "phase_one_feasible", "feasible_intersections",
    "enumerate_vertices", "project",
]


def get_backend(name=None):
    """Return the kernel module called ``name`` (default: the active one)."""
    if name is None:
        return _backend
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} not available; have {sorted(BACKENDS)}") from None


def lp_min(A, b, c, backend=None):
    return get_backend(backend).lp_min(A, b, c)


def phase_one_feasible(A, b, backend=None):
    return get_backend(backend).phase_one_feasible(A, b)


def feasible_intersections(A, b, tol=1e-9, cap=10 ** 6, backend=None):
    return get_backend(backend).feasible_intersections(A, b, tol, cap)


def enumerate_vertices(A, b, tol=1e-9, cap=10 ** 6, backend=None):
    return dedupe(get_backend(backend).feasible_intersections(A, b, tol, cap), tol)


def project(A, b, x, tol=1e-10, backend=None):
    return get_backend(backend).project(A, b, x, tol)
