"""Backend selection for the hot kernels.

The compiled extension is used when it imports; otherwise, or when
``BMO_PURE_PYTHON=1`` is set, the numpy fallback is used.  Callers go
through the module attributes so ``use_backend`` takes effect globally.
"""
import os

from . import _pykernels

TERMINAL = _pykernels.TERMINAL
PRE_PARENT = _pykernels.PRE_PARENT
PARENT = _pykernels.PARENT

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

BACKENDS = {"python": _pykernels}
if _compiled is not None:
    BACKENDS["compiled"] = _compiled

backend = None
select_best = ucb_scores = classify_flags = None


def use_backend(name):
    global backend, select_best, ucb_scores, classify_flags
    if name not in BACKENDS:
        raise ValueError(f"backend {name!r} unavailable; have {sorted(BACKENDS)}")
    mod = BACKENDS[name]
    backend = name
    select_best = mod.select_best
    ucb_scores = mod.ucb_scores
    classify_flags = mod.classify_flags


if _compiled is not None and os.environ.get("BMO_PURE_PYTHON", "") not in ("1", "true", "yes"):
    use_backend("compiled")
else:
    use_backend("python")
