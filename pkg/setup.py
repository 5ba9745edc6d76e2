"""Build script for the optional compiled SMO core.

The package works without the extension: neosda.smo falls back to a pure
numpy solver at import time. The extension is only a speedup for the hot
training loop, so a failed build must not abort installation.
"""

from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "neosda._smo",
                ["src/neosda/_smo.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        language_level=3,
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
