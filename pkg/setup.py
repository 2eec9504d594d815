import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

ext = Extension(
    "shipgen._kernels",
    ["src/shipgen/_kernels.pyx"],
    include_dirs=[np.get_include()],
    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    # no contraction into FMA, so results match the pure-Python kernels bit for bit
    extra_compile_args=["-O2", "-ffp-contract=off"],
)

setup(ext_modules=cythonize([ext], compiler_directives={"language_level": 3}))
