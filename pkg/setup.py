import os

import numpy as np
from setuptools import Extension, setup

# KNNKL_NO_EXT=1 installs the pure-Python fallback only.
ext_modules = []
if not os.environ.get("KNNKL_NO_EXT"):
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "knnkl._kdtree",
                ["src/knnkl/_kdtree.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
