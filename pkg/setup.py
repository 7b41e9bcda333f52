"""Build script: compiles the optional Cython search kernels.

The package works without the extension (a pure-Python implementation of the
same kernels is selected at import time), so a failed compile downgrades to a
warning instead of aborting the install.
"""

import sys

from setuptools import setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "sudorl.sudoku._speedups",
                ["src/sudorl/sudoku/_speedups.pyx"],
                include_dirs=[np.get_include()],
            )
        ],
        language_level="3",
    )
except Exception as exc:  # pragma: no cover - build-env dependent
    print(f"warning: skipping compiled kernels ({exc}); "
          "falling back to pure-Python search", file=sys.stderr)

setup(ext_modules=ext_modules)
