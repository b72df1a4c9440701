from setuptools import setup

__project__ = 'bkfilter'
__packages__ = ['bkfilter']
__desc__ = 'Bayesian knockoff filter: FDR-controlled feature selection with knockoffs sampled inside a Gibbs sampler.'
__version__ = '0.1.0'
__author__ = "bkfilter contributors"
__license__ = 'MIT'
__keywords__ = [
    'knockoff',
    'false discovery rate',
    'variable selection',
    'bayesian',
    'gibbs sampler',
]
__classifiers__ = [
        'Development Status :: 3 - Alpha',
        'Intended Audience :: Science/Research',
        'Topic :: Scientific/Engineering :: Mathematics',
        'Programming Language :: Python :: 3',
        'Programming Language :: Python :: 3 :: Only',
    ]
__requires__ = [
    'numpy>=1.22',
    'scipy>=1.8',
    'pandas>=1.4',
    'pyyaml>=6.0',
    'tqdm>=4.60',
]
__extra_requires__ = {
    'test': ['pytest'],
    'docs': ['sphinx', 'sphinx-rtd-theme'],
}
__long_description__ = """Feature selection with a controlled Bayesian false discovery rate.

```python
from bkfilter import load_dataset, fit_joint_model, run_chain_linear, select_from_trace

data = load_dataset("data.csv", response="y")
model, moments = fit_joint_model(data.x)
trace = run_chain_linear(data.with_design(moments.transform(data.x)), model)
result = select_from_trace(trace, alpha=0.1)
print(result.selected)
```

The `bkf` command runs the same pipeline on CSV files.
"""

setup(
    name=__project__,
    version=__version__,
    description=__desc__,
    long_description=__long_description__,
    long_description_content_type='text/markdown',
    author=__author__,
    license=__license__,
    classifiers=__classifiers__,
    keywords=__keywords__,
    packages=__packages__,
    python_requires='>=3.8',
    install_requires=__requires__,
    extras_require=__extra_requires__,
    entry_points={
        'console_scripts': ['bkf = bkfilter.cli:main'],
    },
)
