"""Build script for the optional compiled BFS kernel.

The package is pure Python plus one Cython extension (`kgrec._bfs`) that
accelerates shortest-path queries on large graphs.  If Cython or a C
compiler is unavailable the extension is skipped and `kgrec` falls back to
the pure-Python implementation at import time.
"""

import os

from setuptools import setup
from setuptools.command.build_ext import build_ext
from setuptools.extension import Extension


class optional_build_ext(build_ext):
    """Build the extension if possible, warn and continue otherwise."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing, etc.
            print(f"warning: skipping compiled extension ({exc}); "
                  "pure-Python fallback will be used")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: could not build {ext.name} ({exc}); "
                  "pure-Python fallback will be used")


ext_modules = []
if not os.environ.get("KGREC_NO_EXT"):
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [Extension("kgrec._bfs", ["src/kgrec/_bfs.pyx"])],
            compiler_directives={"language_level": 3},
        )
    except ImportError:
        print("warning: Cython not found; building without the compiled kernel")

setup(
    ext_modules=ext_modules,
    cmdclass={"build_ext": optional_build_ext},
)
