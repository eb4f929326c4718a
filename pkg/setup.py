from setuptools import Extension, setup
from Cython.Build import cythonize

# -ffp-contract=off keeps the compiler from fusing multiply-add: every product
# must round to float32 before accumulation or the kernels stop being
# bit-identical to the scalar reference order.
ext_modules = [
    Extension(
        "drsfi._kernels._core",
        ["src/drsfi/_kernels/_core.pyx"],
        extra_compile_args=["-O3", "-ffp-contract=off"],
    )
]

setup(ext_modules=cythonize(ext_modules, language_level=3))
