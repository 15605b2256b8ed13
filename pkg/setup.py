"""Build script for the optional compiled kernels.

The package works without the extension (a pure-Python fallback is selected
at import time), so build failures here are deliberately non-fatal.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
    from numpy import get_include

    ext_modules = cythonize(
        [
            Extension(
                "hetcurve._core._kernels",
                ["src/hetcurve/_core/_kernels.pyx"],
                include_dirs=[get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": 3},
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
