# Builds the optional compiled kernels. The package still imports (and uses
# the numpy fallbacks) if this step is skipped or fails.
import os

from setuptools import setup

ext_modules = []
if os.environ.get("CADENCE_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        extensions = [
            Extension(
                "cadence._kernels._smo",
                ["src/cadence/_kernels/_smo.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            ),
            Extension(
                "cadence._kernels._lstm",
                ["src/cadence/_kernels/_lstm.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            ),
        ]
        ext_modules = cythonize(
            extensions,
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
                "initializedcheck": False,
            },
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
