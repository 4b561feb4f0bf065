"""Build script: compiles the Cython backfitting kernel when possible.

The extension is optional; without a compiler the package installs with
the NumPy fallback kernel (see qfmed._kernels).
"""

import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "qfmed._kernels._backfit_cy",
                ["src/qfmed/_kernels/_backfit_cy.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
