"""Selects the kernel implementation at import.

The compiled extension is used when it imports; setting the environment
variable ``PEXP_BACKEND=python`` forces the numpy implementation.
"""
from __future__ import annotations

import logging
import os

from . import _pykernels

log = logging.getLogger(__name__)

_requested = os.environ.get("PEXP_BACKEND", "auto").lower()

kernels = _pykernels
NAME = "python"
if _requested != "python":
    try:
        from . import _kernels as _compiled
    except ImportError as exc:
        if _requested == "cython":
            raise
        log.debug("compiled kernels unavailable (%s); using numpy kernels", exc)
    else:
        kernels = _compiled
        NAME = "cython"

whiten = kernels.whiten
unwhiten = kernels.unwhiten
log_marginal_terms = kernels.log_marginal_terms
gibbs_block = kernels.gibbs_block
hyper_logpdf = kernels.hyper_logpdf

HYPER_NONE = _pykernels.HYPER_NONE
HYPER_INVGAMMA = _pykernels.HYPER_INVGAMMA
HYPER_TRUNCEXP = _pykernels.HYPER_TRUNCEXP
HYPER_PRODUCT = _pykernels.HYPER_PRODUCT


def get_kernels(name: str = "auto"):
    """Return a specific kernel module: ``"python"``, ``"cython"`` or the active one."""
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _kernels

        return _kernels
    return kernels
