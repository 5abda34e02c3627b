import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # the package falls back to numpy loops
    ext_modules = []
else:
    ext_modules = cythonize(
        [Extension("fbbai._ckernels", ["src/fbbai/_ckernels.pyx"],
                   include_dirs=[np.get_include()], extra_compile_args=["-O3"])],
        language_level=3,
    )

setup(ext_modules=ext_modules)
