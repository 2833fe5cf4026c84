"""Selects the compiled kernels when available, else the numpy fallback.

Callers go through attribute access (`kernels.bfs_word_ball(...)`) so that
`use_backend` can swap implementations at runtime for tests and benchmarks.
"""

from . import _fallback

try:
    from . import _core
except ImportError:  # extension not built
    _core = None

_NAMES = ("bfs_word_ball", "line_weights", "propagate_frame")
BACKEND = ""


def available():
    return ["cython", "python"] if _core is not None else ["python"]


def use_backend(name: str) -> None:
    global BACKEND
    if name == "cython":
        if _core is None:
            raise RuntimeError("compiled extension heisembed._core is not built")
        src = _core
    elif name == "python":
        src = _fallback
    else:
        raise ValueError(f"unknown backend {name!r}")
    for n in _NAMES:
        globals()[n] = getattr(src, n)
    BACKEND = name


use_backend("cython" if _core is not None else "python")
