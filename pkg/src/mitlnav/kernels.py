"""Rollout kernel selection.

The compiled extension is used for models that carry a ``kernel_id``; any
other model, or every model when ``MITLNAV_PURE_PYTHON=1`` is set, runs on
the pure-Python implementation.
"""
import os

import numpy as np

from . import _kernels_py

try:
    if os.environ.get("MITLNAV_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("compiled kernels disabled by environment")
    from . import _kernels as _compiled
except ImportError:  # pragma: no cover - depends on the build
    _compiled = None

HAVE_COMPILED = _compiled is not None


def backend_for(model) -> str:
    return "compiled" if (HAVE_COMPILED and model.kernel_id >= 0) else "python"


def rollout(model, x0, chi_d, U, u_ss, dt, n_sub, Q, R, sens=True, backend=None):
    backend = backend or backend_for(model)
    if backend == "compiled":
        return _compiled.rollout(
            model.kernel_id, np.ascontiguousarray(model.kernel_params, float),
            np.ascontiguousarray(x0, float), np.ascontiguousarray(chi_d, float),
            np.ascontiguousarray(U, float), np.ascontiguousarray(u_ss, float),
            float(dt), int(n_sub), np.ascontiguousarray(Q, float),
            np.ascontiguousarray(R, float), bool(sens))
    return _kernels_py.rollout(model, np.asarray(x0, float), np.asarray(chi_d, float),
                               np.asarray(U, float), np.asarray(u_ss, float), dt, n_sub,
                               np.asarray(Q, float), np.asarray(R, float), sens)


def track(model, x0, xbar0, ubar, k, u_lo, u_hi, D, dt, backend=None):
    backend = backend or backend_for(model)
    if backend == "compiled":
        return _compiled.track(
            model.kernel_id, np.ascontiguousarray(model.kernel_params, float),
            np.ascontiguousarray(x0, float), np.ascontiguousarray(xbar0, float),
            np.ascontiguousarray(ubar, float), float(k), np.ascontiguousarray(u_lo, float),
            np.ascontiguousarray(u_hi, float), np.ascontiguousarray(D, float), float(dt))
    return _kernels_py.track(model, np.asarray(x0, float), np.asarray(xbar0, float),
                             np.asarray(ubar, float), float(k), np.asarray(u_lo, float),
                             np.asarray(u_hi, float), np.asarray(D, float), dt)
