# pylint: disable=import-error
from setuptools import setup, find_packages

setup(
    name='sentikernels',
    version='0.1.0',
    description='String kernels and bag-of-word-embeddings for polarity and topic classification',
    packages=find_packages('src'),
    package_dir={'': 'src'},
    package_data={'sentikernels.core': ['*.knowledge.md']},
    install_requires=[
        'numpy>=1.26.0',
        'scipy>=1.11.0',
        'psutil>=6.1.0',
        'joblib>=1.3.0',
        'tqdm>=4.66.0',
        'tomli>=2.0.1; python_version < "3.11"',
    ],
    extras_require={
        'plot': ['matplotlib>=3.8.0'],  # scripts/plot_zipf.py
    },
    python_requires='>=3.9',
    entry_points={
        'console_scripts': [
            'sentikernels=sentikernels.main:main',
        ],
    },
)
