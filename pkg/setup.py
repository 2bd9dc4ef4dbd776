"""Build the optional Cython tape kernel; the package still installs without it."""

import os

from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("DISCHELM_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "dischelm.kernels._ctape",
                    ["src/dischelm/kernels/_ctape.pyx"],
                    include_dirs=[np.get_include()],
                    # results must match the libm-based scalar path bit for bit: no FMA
                    # contraction, and no sin/cos fusion into sincos (different rounding)
                    extra_compile_args=["-O2", "-ffp-contract=off", "-fno-builtin-sin", "-fno-builtin-cos"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
