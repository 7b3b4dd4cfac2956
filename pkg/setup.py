"""Build hook for the optional compiled kernel extension.

The package is fully functional without the extension (pure-Python kernels
are selected at import time when the compiled module is missing), so any
compilation failure downgrades to a pure build instead of failing the install.
"""

import sys

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        ["src/mpcdist/_ckernels.pyx"],
        language_level=3,
        compiler_directives={
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )
    include_dirs = [numpy.get_include()]
except Exception as exc:  # pragma: no cover - build-environment dependent
    print(f"mpcdist: compiled kernels skipped ({exc}); pure-Python fallback "
          "will be used", file=sys.stderr)
    include_dirs = []

setup(ext_modules=ext_modules, include_dirs=include_dirs)
