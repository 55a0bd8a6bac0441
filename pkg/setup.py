from setuptools import setup, find_packages

requirements = [
    "numpy",
    "scipy",
    "pandas",
    "click",
    "confuse",
    "pyyaml",
    "oyaml",
    "tqdm",
    "blessed",
    "multiprocessing-logging",
]

setup(
    name="torus-nf",
    version="0.1.0",
    packages=find_packages(exclude=["tests"]),
    long_description=open("README.md").read(),
    entry_points="""
        [console_scripts]
        torusnf=torus_nf.cli:torusnf
    """,
    install_requires=requirements,
    package_data={"torus_nf": ["config_default.yaml"]},
    include_package_data=True,
)
