"""Backend selection for the hot kernels.

The compiled extension ``qlab._ckernels`` is used when importable; otherwise
(or when ``QLAB_PURE_PYTHON`` is set to a non-empty value other than ``0``) the
numpy fallback in ``qlab._pykernels`` is used.  Callers look kernels up on this
module at call time, so :func:`use_backend` switches every estimator at once.
"""

import os
from contextlib import contextmanager

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    _BACKENDS["cython"] = _ckernels

_NAMES = ("pivot", "ratio_test", "pinball_terms", "pav")

BACKEND = ""


def available() -> list[str]:
    return sorted(_BACKENDS)


def set_backend(name: str) -> None:
    global BACKEND
    if name not in _BACKENDS:
        raise ValueError(f"backend {name!r} unavailable; have {available()}")
    impl = _BACKENDS[name]
    for fn in _NAMES:
        globals()[fn] = getattr(impl, fn)
    BACKEND = name


@contextmanager
def use_backend(name: str):
    previous = BACKEND
    set_backend(name)
    try:
        yield
    finally:
        set_backend(previous)


_forced = os.environ.get("QLAB_PURE_PYTHON", "") not in ("", "0")
set_backend("cython" if "cython" in _BACKENDS and not _forced else "python")
