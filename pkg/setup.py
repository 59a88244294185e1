import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure-Python install; stochsol falls back at import
    cythonize = None

NP_RANDOM_LIB = os.path.join(os.path.dirname(np.__file__), "random", "lib")

ext_modules = []
if cythonize is not None and not os.environ.get("STOCHSOL_NO_EXT"):
    ext_modules = cythonize(
        [
            Extension(
                "stochsol._ckernels",
                ["src/stochsol/_ckernels.pyx"],
                include_dirs=[np.get_include()],
                library_dirs=[NP_RANDOM_LIB],
                libraries=["npyrandom", "m"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
