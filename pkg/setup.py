from setuptools import find_packages, setup

with open('README.md', 'r') as f:
    long_description = f.read()

with open('VERSION', 'r') as f:
    version = f.read().strip()

extras = {
    'test': ['pytest >= 6.1.1', 'pytest-cov >= 2.10.1']
}

extras['all'] = [item for group in extras.values() for item in group]

setup(
    name='varjet',
    version=version,
    description='Variationality checks for differential equations on jet '
                'spaces and a verified relativistic top model',
    long_description=long_description,
    long_description_content_type='text/markdown',
    packages=find_packages(include=['varjet'], exclude=['tests']),
    package_data={'varjet': ['data/*.model']},
    license='Apache 2.0',
    python_requires='>=3.7',
    entry_points={
        'console_scripts': ['varjet=varjet:_main']
    },
    install_requires=[
        'numpy >= 1.18.0'
    ],
    extras_require=extras
)
