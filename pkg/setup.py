"""Build the optional Cython kernel extension.

The package works without it (``windgp._kernels_py`` is used instead), so a
missing compiler or Cython only downgrades performance.
"""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("WINDGP_NO_EXT", "") != "1":
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
                    "windgp._kernels",
                    ["src/windgp/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": 3},
        )

setup(ext_modules=ext_modules)
