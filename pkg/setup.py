import os
import sys

import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

openmp = [] if sys.platform == "darwin" or os.environ.get("PSHENVELOPE_NO_OPENMP") else ["-fopenmp"]

extensions = [
    Extension(
        "pshenvelope.kernels._sweep",
        ["src/pshenvelope/kernels/_sweep.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3"] + openmp,
        extra_link_args=openmp,
    )
]

setup(
    ext_modules=cythonize(extensions, compiler_directives={"language_level": "3"}),
)
