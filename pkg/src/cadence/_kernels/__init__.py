"""Hot numerical kernels with a compiled path and a numpy fallback.

The compiled extension is used when it has been built and
``CADENCE_PURE_PYTHON`` is not set to ``1``. ``BACKEND`` records which
implementation was selected at import time.
"""
import os

from . import lstm_py, smo_py

BACKEND = "python"

smo_solve = smo_py.smo_solve
lstm_forward = lstm_py.lstm_forward
lstm_backward = lstm_py.lstm_backward

if os.environ.get("CADENCE_PURE_PYTHON", "0") != "1":
    try:
        from . import _lstm, _smo
    except ImportError:
        pass
    else:
        smo_solve = _smo.smo_solve
        lstm_forward = _lstm.lstm_forward
        lstm_backward = _lstm.lstm_backward
        BACKEND = "cython"


def backends():
    """Return ``{name: module-like namespace}`` for every importable backend."""
    found = {"python": _Namespace(smo_py.smo_solve, lstm_py.lstm_forward, lstm_py.lstm_backward)}
    try:
        from . import _lstm, _smo
    except ImportError:
        return found
    found["cython"] = _Namespace(_smo.smo_solve, _lstm.lstm_forward, _lstm.lstm_backward)
    return found


class _Namespace:
    def __init__(self, smo_solve, lstm_forward, lstm_backward):
        self.smo_solve = smo_solve
        self.lstm_forward = lstm_forward
        self.lstm_backward = lstm_backward
