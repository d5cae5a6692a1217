"""Build script for the compiled scan kernels.

The package works without the extension (a NumPy fallback is selected at
import time), so a failed Cython build should not make the install unusable.
We still let the error propagate when Cython itself is importable, because in
that case a build failure is a real problem worth surfacing.
"""

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "loomspect._scan_cy",
                ["src/loomspect/_scan_cy.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
