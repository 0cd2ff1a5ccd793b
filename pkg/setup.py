import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

# No -ffast-math: the pure-Python fallback must agree with the compiled
# kernels to float64 rounding, which requires IEEE-conformant codegen.
ext_modules = [
    Extension(
        "polezoo._core",
        sources=["src/polezoo/_core.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
]

setup(
    ext_modules=cythonize(ext_modules, language_level=3) if cythonize else [],
)
