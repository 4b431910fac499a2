"""Shortest-path backend selection.

Prefers the compiled Cython kernel when the extension was built, otherwise
uses the pure-Python implementation.  `BACKEND` records which one is live;
`benchmarks/bench_bfs.py` compares the two.
"""

try:
    from kgrec import _bfs as _impl
    BACKEND = "cython"
except ImportError:
    from kgrec import _bfs_py as _impl
    BACKEND = "python"

pair_distance = _impl.pair_distance
pair_distances = _impl.pair_distances
