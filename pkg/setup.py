"""Build the optional Cython Euler-Maruyama kernel.

The package works without it: ``feplab._backend`` falls back to numpy when
the extension cannot be imported.
"""
import numpy as np
from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext

try:
    from Cython.Build import cythonize
except ImportError:  # no Cython: pure-Python install
    ext_modules = []
else:
    try:
        ext_modules = cythonize(
            [
                Extension(
                    "feplab._emkernel",
                    ["src/feplab/_emkernel.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                    optional=True,
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except Exception as exc:  # Cython compile error: keep the numpy fallback
        print(f"warning: cythonize failed ({exc})")
        ext_modules = []


class OptionalBuildExt(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing or broken
            print(f"warning: skipping compiled kernel ({exc})")


setup(ext_modules=ext_modules, cmdclass={"build_ext": OptionalBuildExt})
