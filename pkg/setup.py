"""Build script for the optional compiled stepping core.

The package works without the extension (a NumPy fallback is selected at
import time); building it is strongly recommended for long single-path runs.
"""

import os

import numpy as np
from setuptools import Extension, setup
from Cython.Build import cythonize

extensions = [
    Extension(
        "latticespin._kernels",
        sources=["src/latticespin/_kernels.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3", "-fopenmp"],
        extra_link_args=["-fopenmp"],
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={"language_level": 3, "boundscheck": False, "wraparound": False},
        annotate=False,
        nthreads=int(os.environ.get("LATTICESPIN_BUILD_JOBS", "0")) or None,
    )
)
