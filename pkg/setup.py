#!/usr/bin/env python
from setuptools import setup

with open("README.rst") as readme_file:
    readme = readme_file.read()

with open("CHANGELOG.rst") as changelog_file:
    changelog = changelog_file.read()

requirements = [
    "numpy",
    "scipy",
    "packaging",
    "pyyaml",
    "jinja2",
    "colorama",
    "typing_extensions",
]


setup(
    name="thermospike",
    description="Clocked integrate-and-fire networks where background noise sets the "
    "temperature",
    long_description=readme + "\n\n" + changelog,
    author="thermospike developers",
    packages=[
        "thermospike",
    ],
    package_data={"thermospike": ["presets/*.yml"]},
    entry_points={
        "console_scripts": [
            "thermospike = thermospike.cli:main",
        ]
    },
    use_scm_version={"write_to": "src/thermospike/_version.py"},
    setup_requires=["setuptools_scm"],
    package_dir={"": "src"},
    install_requires=requirements,
    license="MIT",
    zip_safe=False,
    keywords="spiking neural networks, boltzmann machine, integrate-and-fire",
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: MIT License",
        "Natural Language :: English",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Programming Language :: Python :: 3.12",
        "Topic :: Scientific/Engineering",
    ],
    test_suite="tests",
)
