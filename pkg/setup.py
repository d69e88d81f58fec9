"""Build script for the compiled K-NN kernel.

The extension is optional: if Cython or a C compiler is unavailable the
package installs anyway and falls back to the pure-NumPy k-d tree at import
time (see sqn.neighbors).
"""

import numpy as np
from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:
            print(f"warning: compiled kernel skipped ({exc}); pure fallback will be used")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: {ext.name} skipped ({exc}); pure fallback will be used")


try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "sqn._kdtree",
                ["src/sqn/_kdtree.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level="3",
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules, cmdclass={"build_ext": optional_build_ext})
