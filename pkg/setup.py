import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "levent._kernels",
        ["src/levent/_kernels.pyx"],
        include_dirs=[np.get_include()],
        # no -ffast-math: trajectory files must be bit-reproducible
        extra_compile_args=["-O3"],
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={"language_level": "3"},
    )
)
