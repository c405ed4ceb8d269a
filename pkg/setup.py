import re
from pathlib import Path

import setuptools

ROOT = Path(__file__).parent
METADATA_KEYS = ("__author__", "__version__", "__url__")


def read_long_description():
    readme = ROOT / "README.md"
    if not readme.exists():
        return "Probabilistic numerical method of lines."
    return readme.read_text(encoding="utf-8")


# __author__, __version__ and __url__ are module-level string assignments in pnmol/__init__.py
def retrieve_metadata():
    source = (ROOT / "pnmol" / "__init__.py").read_text(encoding="utf-8")
    found = dict(re.findall(r'^(__\w+__)\s*=\s*["\']([^"\']*)["\']', source, re.M))
    missing = [key for key in METADATA_KEYS if key not in found]
    if missing:
        raise ValueError(f"pnmol/__init__.py lacks metadata: {missing}")
    return found


def read_requirements(relative_path):
    path = ROOT / relative_path
    if not path.exists():
        print(f"Warning: {relative_path} not found, no dependencies taken from it.")
        return []
    lines = (line.strip() for line in path.read_text(encoding="utf-8").splitlines())
    return [line for line in lines if line and not line.startswith("#")]


metadata = retrieve_metadata()

setuptools.setup(
    name="pnmol",
    url=metadata["__url__"],
    version=metadata["__version__"],
    author=metadata["__author__"],
    description="Probabilistic numerical method of lines for time-dependent PDEs",
    long_description=read_long_description(),
    long_description_content_type="text/markdown",
    packages=setuptools.find_packages(exclude=("tests*", "docs*", "reproduce*")),
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
        "Intended Audience :: Science/Research",
        "Topic :: Scientific/Engineering :: Mathematics",
    ],
    python_requires=">=3.9",
    install_requires=read_requirements("requirements.txt"),
    include_package_data=True,
    extras_require={
        "cli": read_requirements("pnmol/cli/requirements.txt"),
        "test": ["pytest"],
    },
    entry_points={
        "console_scripts": [
            "pnmol=pnmol.cli.pnmol_cli:main [cli]",
        ],
    },
)
