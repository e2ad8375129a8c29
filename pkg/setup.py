import numpy
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "trajdp._kernels",
        ["src/trajdp/_kernels.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        # no fused multiply-add so results match the pure-Python twin bit for bit
        extra_compile_args=["-O2", "-ffp-contract=off"],
        language="c++",
    )
]

setup(ext_modules=cythonize(extensions, compiler_directives={"language_level": "3"}))
