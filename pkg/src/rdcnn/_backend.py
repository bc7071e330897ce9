"""Pick the kernel backend once, at import.

``RDCNN_BACKEND`` may be ``auto`` (default: compiled if importable),
``cython`` (compiled, fail if missing) or ``python`` (numpy fallback).
"""

import importlib
import os

from . import _fallback

BACKENDS = ("cython", "python")


def load(name):
    if name == "python":
        return _fallback
    if name == "cython":
        return importlib.import_module("rdcnn._core")
    raise ValueError(f"unknown backend {name!r}; expected one of {BACKENDS}")


def available():
    names = ["python"]
    try:
        load("cython")
    except ImportError:
        pass
    else:
        names.insert(0, "cython")
    return names


def _select():
    choice = os.environ.get("RDCNN_BACKEND", "auto").lower()
    if choice == "auto":
        try:
            return load("cython")
        except ImportError:
            return _fallback
    return load(choice)


kernels = _select()
