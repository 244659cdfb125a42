"""Build script for the optional compiled kernel core.

The package works without the extension (the numpy fallback in
``xattrib._kernels.pure`` is selected at import time), so a failed
Cython build degrades to a pure install instead of aborting it.
"""

from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "xattrib._kernels._core",
                ["src/xattrib/_kernels/_core.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
