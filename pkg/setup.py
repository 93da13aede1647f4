"""Build script for the optional compiled kernel core.

The package works without the extension (a numpy fallback is selected at
import time), so the build is marked optional: a missing compiler or
Cython only costs speed, never the install.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    extensions = []
else:
    extensions = cythonize(
        [
            Extension(
                "itfkan.kernels._core",
                ["src/itfkan/kernels/_core.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        language_level="3",
    )

for ext in extensions:
    ext.optional = True

setup(ext_modules=extensions)
