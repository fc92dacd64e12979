"""Build script: compiles the optional Cython path-simulation kernel.

The package works without the extension (a numpy fallback is selected at
import time), so a failed compile only costs speed.
"""

import os

import numpy
from setuptools import setup

try:
    if not os.path.exists("src/drawdown/kernels/_core.pyx"):
        raise ImportError
    from Cython.Build import cythonize

    ext_modules = cythonize(
        ["src/drawdown/kernels/_core.pyx"],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )
except ImportError:
    ext_modules = []

setup(
    ext_modules=ext_modules,
    include_dirs=[numpy.get_include()],
)
