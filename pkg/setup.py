import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

ext = Extension(
    "torusdisc._ckernels",
    ["src/torusdisc/_ckernels.pyx"],
    include_dirs=[np.get_include()],
    # no fused multiply-add: the compiled and pure Python kernels must round identically
    extra_compile_args=["-O3", "-ffp-contract=off"],
    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
)

setup(ext_modules=cythonize([ext], language_level=3))
