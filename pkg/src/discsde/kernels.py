"""Backend selection for the EM kernels.

The compiled extension is used for built-in models when it imported
successfully; everything else runs on the numpy fallback.  Setting
``DISCSDE_BACKEND=python`` forces the fallback.
"""

import os

import numpy as np

from . import _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:  # pragma: no cover - depends on the build
    _compiled = None

HAVE_COMPILED = _compiled is not None


def default_backend():
    forced = os.environ.get("DISCSDE_BACKEND", "").lower()
    if forced == "python" or not HAVE_COMPILED:
        return "python"
    return "compiled"


class _Compiled:
    """Adapter giving the extension the model-based signatures of the fallback."""

    NAME = "compiled"

    @staticmethod
    def _args(model):
        kind, params = model.kernel
        return kind, np.ascontiguousarray(params, dtype=float), np.ascontiguousarray(model.x0)

    def coarse_paths(self, model, dw, n):
        return _compiled.coarse_paths(*self._args(model), np.ascontiguousarray(dw), int(n))

    def endpoints(self, model, dw, ns):
        return _compiled.endpoints(*self._args(model), np.ascontiguousarray(dw),
                                   np.asarray(ns, dtype=np.int_))

    def continuous_paths(self, model, dw, n):
        return _compiled.continuous_paths(*self._args(model), np.ascontiguousarray(dw), int(n))

    def sup_errors(self, model, dw, ns):
        return _compiled.sup_errors(*self._args(model), np.ascontiguousarray(dw),
                                    np.asarray(ns, dtype=np.int_))

    def occupation(self, model, dw, n, eps):
        return _compiled.occupation(*self._args(model), np.ascontiguousarray(dw), int(n),
                                    np.ascontiguousarray(eps, dtype=float))


_COMPILED = _Compiled() if HAVE_COMPILED else None


def backend_for(model, backend=None):
    """Kernel module for ``model``: compiled when possible and not overridden."""
    backend = backend or default_backend()
    if backend == "compiled" and _COMPILED is not None and model.kernel is not None:
        return _COMPILED
    return _kernels_py
