"""Kernel dispatch.

The compiled extension is used when it imports; setting ``ELVOL_PURE_PYTHON=1``
forces the numpy versions. ``BACKEND`` records the choice.
"""
import os

from elvol import _pykernels

BACKEND = "python"
weighted_moments = _pykernels.weighted_moments
el_dual_terms = _pykernels.el_dual_terms

if not os.environ.get("ELVOL_PURE_PYTHON"):
    try:
        from elvol import _ckernels
    except ImportError:  # extension not built
        pass
    else:
        BACKEND = "cython"
        weighted_moments = _ckernels.weighted_moments
        el_dual_terms = _ckernels.el_dual_terms

__all__ = ["BACKEND", "weighted_moments", "el_dual_terms"]
