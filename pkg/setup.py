"""Build script: compiles the optional Cython kernels.

The package works without the extension (a pure-Python fallback is
selected at import time), so any build failure here downgrades to a
source-only install instead of aborting.
"""

from setuptools import Extension, setup


def extensions():
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    try:
        return cythonize(
            [
                Extension(
                    "xfer_forge._kernels._wordpiece",
                    ["src/xfer_forge/_kernels/_wordpiece.pyx"],
                )
            ],
            language_level=3,
        )
    except Exception:
        return []


setup(ext_modules=extensions())
