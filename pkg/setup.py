import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    # Pure-python install: splinenet.backend falls back to the numpy kernels.
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "splinenet._kernels_cy",
                ["src/splinenet/_kernels_cy.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
