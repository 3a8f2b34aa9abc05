"""Build script. The Cython extension is optional: if Cython or a C compiler
is unavailable the package installs pure-Python and crosstalk.kernels falls
back to the numpy implementations.

Build in place for development:  python setup.py build_ext --inplace
Skip the extension entirely:     CROSSTALK_SKIP_EXT=1 pip install -e .
"""

import os
import sys

from setuptools import setup
from setuptools.command.build_ext import build_ext


def make_extensions():
    if os.environ.get("CROSSTALK_SKIP_EXT"):
        return []
    try:
        from Cython.Build import cythonize
        import numpy
    except ImportError:
        print("crosstalk: Cython/numpy unavailable at build time, "
              "skipping compiled kernels", file=sys.stderr)
        return []
    from setuptools import Extension

    extra = ["-O3"] if os.name == "posix" else []
    ext = Extension(
        "crosstalk._speedups",
        ["src/crosstalk/_speedups.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=extra,
    )
    return cythonize([ext], language_level="3")


class optional_build_ext(build_ext):
    """Never let a failed compile block installation."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing, broken toolchain, ...
            print(f"crosstalk: compiled kernels skipped ({exc})", file=sys.stderr)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"crosstalk: building {ext.name} failed ({exc}); "
                  "falling back to pure Python", file=sys.stderr)


setup(
    ext_modules=make_extensions(),
    cmdclass={"build_ext": optional_build_ext},
)
