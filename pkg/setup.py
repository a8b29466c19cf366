"""Build hook for the optional compiled kernel.

The package is pure Python plus one Cython extension holding the hot
numerical kernels (batched Hermitian eigendecomposition and the MMWU
round primitive).  If the extension cannot be built the install still
succeeds and qelab._kernel falls back to the numpy implementation at
import time.
"""

import numpy as np
from setuptools import setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        "src/qelab/_kernel/_cykernel.pyx",
        compiler_directives={"language_level": 3},
    )
except Exception:
    ext_modules = []

setup(
    ext_modules=ext_modules,
    include_dirs=[np.get_include()],
)
