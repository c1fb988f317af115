from setuptools import setup, find_packages

with open("README.md", "r", encoding="utf-8") as fh:
    long_description = fh.read()

setup(
    name="dinikit",
    version="0.1.0",
    description="Numerical toolkit for boundary regularity under Dini mean oscillation",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=find_packages(exclude=["tests", "tests.*"]),
    package_data={"dinikit": ["scenarios/*.json", "py.typed"]},
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
    ],
    python_requires=">=3.9",
    install_requires=[
        "numpy>=1.22",
        "scipy>=1.12",
        "pydantic>=2.0.0",
        "typing-extensions>=4.0.0",
        "python-dotenv>=1.0.0",
        "tomli>=2.0.0; python_version < '3.11'",
    ],
    extras_require={
        'dev': [
            'pytest>=8.0',
            'pytest-cov>=4.1',
            'black',
            'flake8',
        ],
    },
    entry_points={"console_scripts": ["dinikit=dinikit.cli:main"]},
)
