"""Build script: compiles the optional Cython render kernel.

The package works without the extension (a numpy fallback is selected at
import time), so a failed compile only costs speed.
"""

from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize
    from setuptools.extension import Extension
    import numpy as np

    ext = Extension(
        "eyetwin._kernels.render_cy",
        sources=["src/eyetwin/_kernels/render_cy.pyx"],
        include_dirs=[np.get_include()],
        # -ffp-contract=off: the Cython and numpy kernels must produce
        # bit-identical images; fused multiply-adds would break that.
        extra_compile_args=["-O3", "-ffp-contract=off"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    ext_modules = cythonize(
        [ext],
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
