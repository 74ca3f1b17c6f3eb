import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

ext_modules = cythonize(
    [Extension("qsum3._kernels", ["src/qsum3/_kernels.pyx"], include_dirs=[np.get_include()])],
    language_level=3,
)

setup(ext_modules=ext_modules)
