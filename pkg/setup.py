"""Build the optional Cython kernels.

If Cython or a C compiler is unavailable the package still installs and
``elvol.kernels`` falls back to the numpy implementation.
"""
import os

from setuptools import setup

ext_modules = []
if not os.environ.get("ELVOL_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools.extension import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "elvol._ckernels",
                    ["src/elvol/_ckernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
