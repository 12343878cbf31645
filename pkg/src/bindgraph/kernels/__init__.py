"""Hot numeric kernels with switchable backends.

The numba backend is used when importable; set ``BINDGRAPH_NUMBA=0`` to force
the pure-numpy path or ``BINDGRAPH_NUMBA=1`` to require numba (import error
if missing).  ``benchmarks/bench_kernels.py`` compares the two.
"""

from __future__ import annotations

import os

from . import numpy_impl

_FALSY = {"0", "false", "off", "no"}
_TRUTHY = {"1", "true", "on", "yes"}

_impl = numpy_impl
_name = "numpy"


def set_backend(name: str) -> None:
    """Select 'numba' or 'numpy' at runtime (used by tests and benchmarks)."""
    global _impl, _name
    if name == "numpy":
        _impl, _name = numpy_impl, "numpy"
    elif name == "numba":
        from . import numba_impl
        _impl, _name = numba_impl, "numba"
    else:
        raise ValueError(f"unknown kernel backend {name!r}")


def backend_name() -> str:
    return _name


def _init_from_env() -> None:
    flag = os.environ.get("BINDGRAPH_NUMBA", "").strip().lower()
    if flag in _FALSY:
        set_backend("numpy")
        return
    if flag in _TRUTHY:
        set_backend("numba")
        return
    try:
        set_backend("numba")
    except ImportError:
        set_backend("numpy")


def knn_graph(coords, k):
    return _impl.knn_graph(coords, k)


def radius_graph(centroids, points, radius, k_max):
    return _impl.radius_graph(centroids, points, radius, k_max)


def residue_min_dist(coords, res_index, n_res):
    return _impl.residue_min_dist(coords, res_index, n_res)


def nw_align(a, b, match=1.0, mismatch=0.0, gap=-1.0):
    return _impl.nw_align(a, b, match, mismatch, gap)


_init_from_env()
