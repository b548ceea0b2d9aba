import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

ext = Extension(
    "tvdist._kernel",
    ["src/tvdist/_kernel.pyx"],
    include_dirs=[np.get_include(), "src/tvdist"],
    language="c++",
    extra_compile_args=["-O3", "-std=c++17"],
)

setup(ext_modules=cythonize([ext], compiler_directives={"language_level": "3"}))
