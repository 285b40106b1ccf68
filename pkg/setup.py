import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("V2XSCHED_NO_EXT", "") != "1":
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "v2xsched._kernels._ckernels",
                    ["src/v2xsched/_kernels/_ckernels.pyx"],
                    include_dirs=[numpy.get_include(), "src/v2xsched/_kernels"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    extra_compile_args=["-O3", "-fno-math-errno"],
                    extra_link_args=["-lm"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
