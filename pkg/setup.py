from setuptools import find_packages, setup

setup(
    name="rotalign",
    version="0.0.1",
    description="Rotational alignment of images and volumes with radial and degree compression",
    packages=find_packages(include=["src", "src.*"]),
    py_modules=["args", "engine", "run"],
    package_data={"src.data_utils": ["phantoms/*.json"]},
    install_requires=[
        "numpy==1.24.4",
        "scipy==1.10.1",
        "tqdm==4.64.0",
        "loguru==0.7.3",
        "pydantic==2.4.2",
        "pydantic_settings==2.0.3",
        "python-dotenv==1.0.0",
        "typing_extensions>=4.6.1",
    ],
    extras_require={
        "test": ["pytest==7.4.4"],
    },
    entry_points={
        "console_scripts": ["rotalign=run:main"],
    },
    python_requires=">=3.8",
)
