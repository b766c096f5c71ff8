"""Build the optional compiled sampling core.

The package imports and runs without it (a numpy fallback is selected at
import time), so a missing compiler or Cython only costs speed.
"""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("MMTAIL_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "mmtail._kernels",
                    ["src/mmtail/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    # no FMA contraction: results must match the numpy fallback bit for bit
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
