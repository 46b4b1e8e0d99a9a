"""Build script for the optional compiled kernels.

The package is fully functional without the extension: dqdyn.kernels falls
back to the numpy implementation when dqdyn._kernels is not importable.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "dqdyn._kernels",
                ["src/dqdyn/_kernels.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
