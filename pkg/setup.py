"""Build the compiled integration kernel.

    pip install -e . --no-build-isolation

If Cython or a C compiler is missing the package still installs and the
pure-Python kernel is used instead.
"""
import os

from setuptools import setup

ext_modules = []
if not os.environ.get("LEVYSDDE_NO_EXT"):
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "levysdde._ckernel",
                    ["src/levysdde/_ckernel.pyx"],
                    include_dirs=[numpy.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
