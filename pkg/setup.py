"""Build script for the compiled kernel extension.

The package works without the extension (a NumPy fallback is selected at
import time), so a failed or skipped build is not fatal.
"""
import sys

from setuptools import setup

try:
    import numpy
    from Cython.Build import cythonize
    from setuptools.extension import Extension

    extensions = cythonize(
        [
            Extension(
                "oslk._kernels._core",
                sources=["src/oslk/_kernels/_core.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )
except ImportError:
    print(
        "warning: Cython or NumPy not available at build time; "
        "skipping the compiled kernels (pure NumPy fallback will be used)",
        file=sys.stderr,
    )
    extensions = []

setup(ext_modules=extensions)
