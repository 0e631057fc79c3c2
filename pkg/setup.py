import numpy
from Cython.Build import cythonize
from setuptools import Extension, setup

# -ffp-contract=off keeps the C kernels bit-identical to the numpy fallback
# (no fused multiply-add contraction).
setup(
    ext_modules=cythonize(
        [
            Extension(
                "wrsn_sim._kernels",
                ["src/wrsn_sim/_kernels.pyx"],
                extra_compile_args=["-O2", "-ffp-contract=off"],
                include_dirs=[numpy.get_include()],
            )
        ],
        language_level=3,
    )
)
