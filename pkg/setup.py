import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "pidlcf._ckernels",
        ["src/pidlcf/_ckernels.pyx"],
        include_dirs=[np.get_include()],
        # no fast-math / fp contraction: the backends must agree bit-for-bit
        extra_compile_args=["-O3", "-ffp-contract=off"],
    )
]

setup(
    ext_modules=cythonize(extensions, compiler_directives={"language_level": "3"}),
)
