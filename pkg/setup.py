"""Builds the optional compiled kernel extension.

The package works without it (a NumPy fallback is selected at import time),
so a failed compile only costs speed on small-template correlation and
patch resampling.
"""

from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "splt._kernels",
                ["src/splt/_kernels.pyx"],
                include_dirs=[numpy.get_include()],
                # -ffp-contract=off keeps the bilinear kernel bit-identical
                # to the NumPy twin (no FMA contraction).
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
