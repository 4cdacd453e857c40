import numpy as np
from setuptools import setup

try:
    from Cython.Build import cythonize
except ImportError:
    # Pure-Python fallback kernel is selected at import; the package still works.
    cythonize = None

if cythonize is not None:
    ext_modules = cythonize(
        ["src/spinnet/_ckernel.pyx"],
        language_level="3",
        compiler_directives={"boundscheck": False, "wraparound": False},
    )
else:
    ext_modules = []

setup(ext_modules=ext_modules, include_dirs=[np.get_include()])
