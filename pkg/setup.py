import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

# Native kernels are an optional speedup: the package falls back to the
# pure-numpy implementations in recfno.kernels.pykernels when the extension
# is missing.  No -ffast-math: the two backends must agree to ~1e-12.
extensions = [
    Extension(
        "recfno.kernels._native",
        ["src/recfno/kernels/_native.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
]

setup(
    ext_modules=cythonize(extensions, compiler_directives={"language_level": "3"}),
)
