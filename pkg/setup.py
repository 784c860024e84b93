"""Builds the optional Cython canonicalization kernel.

The package works without it: becov.normalize falls back to the pure-Python
encoder when the extension is absent or BECOV_PURE_PYTHON=1 is set.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [Extension("becov._canon", ["src/becov/_canon.pyx"])],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
