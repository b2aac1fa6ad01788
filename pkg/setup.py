#!/usr/bin/env python

"""
# bfcal
# Copyright 2024 the bfcal authors

# This program is bound to the Hippocratic License 2.1
# Full text is available here:
# https://firstdonoharm.dev/version/2/1/license

# Further to adherence to the Hippocratic License, permission is hereby
# granted, free of charge, to any person obtaining a copy of this software
# and associated documentation files (the "Software") under the terms of the
# MIT License to deal in the Software without restriction, including without
# limitation the rights to use, copy, modify, merge, publish, distribute,
# sublicense, and / or sell copies of the Software, and to permit persons
# to whom the Software is furnished to do so, subject to the conditions layed
# out in the MIT License.

# Where a conflict or dispute would arise between these two licenses, HLv2.1
# shall take precedence.
"""

from pathlib import Path

from setuptools import setup

with Path("README.md").open(encoding="utf-8") as f:
    long_description = f.read()

with Path("requirements.txt").open(encoding="utf-8") as f:
    install_requires = [line.strip() for line in f if line.strip() and not line.startswith("#")]

setup(
    name="bfcal",
    version="0.1.0",
    description="Simulation-based checks for Bayes factor and Bayesian model averaging computations.",
    long_description=long_description,
    long_description_content_type="text/markdown",
    author="the bfcal authors",
    install_requires=install_requires,
    include_package_data=True,
    package_data={"bfcal": ["*.ini"]},
    license="MIT",
    packages=["bfcal"],
    entry_points={"console_scripts": ["bfcal = bfcal.cli:main"]},
    keywords="bayes-factor model-averaging calibration sbc statistics validation",
    python_requires=">=3.9",
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "Environment :: Console",
        "Topic :: Scientific/Engineering :: Mathematics",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Programming Language :: Python :: 3.12",
        "Programming Language :: Python :: 3.13",
    ],
    zip_safe=False,
)
