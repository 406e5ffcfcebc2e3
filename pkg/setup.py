"""Build script: compiles the optional fast-kernel extension.

The package is fully functional without the extension (a numpy fallback is
selected at import time); the build therefore tolerates a missing compiler
or Cython and simply skips the extension in that case.
"""
import os

from setuptools import Extension, setup

compile_args = ["-O3"]
if os.environ.get("OVERCP_BUILD_NATIVE", "") == "1":
    # opt-in: tune for the build machine (enables AVX/FMA where present);
    # the default build sticks to portable baseline codegen
    compile_args.append("-march=native")

ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "overcp._cykernels",
                ["src/overcp/_cykernels.pyx"],
                extra_compile_args=compile_args,
            )
        ],
        language_level=3,
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
