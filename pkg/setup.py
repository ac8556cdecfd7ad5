# setup.py ────────────────────────────────────────────────────────────────
from pathlib import Path
from setuptools import setup, find_packages

# Read long description from README.md
this_dir = Path(__file__).parent
long_description = (this_dir / "README.md").read_text(encoding="utf-8")

setup(
    name="spectralseq",
    version="0.1.0",
    description="Fourier-layer sequence models (FNO-2d, F-RNN, C-RNN) for noisy gridded PDE data, with CLI",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=find_packages(exclude=["tests"]),   # finds the spectralseq/ package
    py_modules=["cli"],                          # include cli.py at top level
    install_requires=[
        "numpy>=1.22",
        "torch>=2.0",
        "matplotlib>=3.5",
    ],
    entry_points={                               # exposes the terminal command
        "console_scripts": [
            "spectralseq=cli:main",
        ],
    },
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
    ],
    python_requires=">=3.8",
)
