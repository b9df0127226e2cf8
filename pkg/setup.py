"""Build script for the optional compiled conv kernels.

The package is pure Python plus one Cython extension (aide.nn._native).
The extension is marked optional: if no compiler or Cython is available
the build still succeeds and the numpy fallback is used at import time.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "aide.nn._native",
                ["src/aide/nn/_native.pyx"],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )
else:
    ext_modules = []

setup(ext_modules=ext_modules)
