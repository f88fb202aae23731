"""Kernel backend selection.

The compiled extension is used when it was built; otherwise the numpy
fallback is imported.  Set ``MANET_AUCTION_BACKEND=python`` to force the
fallback (the benchmark and equivalence tests do this).
"""
import os

BACKEND = "python"
if os.environ.get("MANET_AUCTION_BACKEND", "").lower() != "python":
    try:
        from ._kernels import advance, link_durations, mc_wins  # noqa: F401

        BACKEND = "cython"
    except ImportError:
        pass
if BACKEND == "python":
    from ._kernels_py import advance, link_durations, mc_wins  # noqa: F401
