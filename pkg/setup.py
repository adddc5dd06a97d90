"""Builds the optional compiled grid kernel; the package works without it."""

import os

from setuptools import setup

ext_modules = []
if not os.environ.get("PBDKIT_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "pbdkit.tracekernel._grid",
                    ["src/pbdkit/tracekernel/_grid.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    # keep float results bit-identical to the Python/numpy paths
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
