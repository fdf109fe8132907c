from setuptools import setup

requirements = ["numpy", "scipy", "typing_extensions", "click", "coloredlogs"]

version = "0.1.0"

readme = ""
with open("README.md") as f:
    readme = f.read()

packages = [
    "egmrank",
]

setup(
    name="py-egmrank",
    version=version,
    license="MIT",
    description="Singular value analysis of multichannel atrial electrograms",
    long_description=readme,
    long_description_content_type="text/markdown",
    include_package_data=True,
    install_requires=requirements,
    python_requires=">=3.10",
    classifiers=[
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.10",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
        "Topic :: Scientific/Engineering :: Medical Science Apps.",
    ],
    packages=packages,
    entry_points={"console_scripts": ["egmrank=egmrank.cli:main"]},
)
