import setuptools

with open("README.md", "r") as fh:
    long_description = fh.read()

with open("requirements.txt", "r") as fh:
    requirements = [line.strip() for line in fh if line.strip() and not line.startswith("#")]

setuptools.setup(
    name="DualSelfDistillation",
    version="0.1.0",
    description="Dual self-distillation training for 3D U-shaped segmentation networks",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=setuptools.find_packages(exclude=('tests', 'docs')),
    install_requires=requirements,
    entry_points={"console_scripts": ["dsdseg=DualSelfDistillation.cli:main"]},
    classifiers=[
        "Programming Language :: Python :: 3",
        "Operating System :: OS Independent",
    ],
    python_requires='>=3.8',
)
