"""Build script for the optional compiled kernel core.

The package is fully functional without the extension (a numpy
implementation of every kernel is selected at import time), so a failed
compile downgrades to the pure-Python backend instead of failing the
install.
"""

import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

extensions = []
if cythonize is not None:
    extensions = cythonize(
        [
            Extension(
                "gridcaps.nn._ckernels",
                ["src/gridcaps/nn/_ckernels.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=extensions)
