#!/usr/bin/env python
# -*- coding: utf-8 -*-

import re

from setuptools import setup

with open('README.rst') as readme_file:
    readme = readme_file.read()

with open('HISTORY.rst') as history_file:
    history = history_file.read()


def load_reqs(filename):
    with open(filename) as reqs_file:
        return [
            re.sub('==', '>=', line) for line in reqs_file.readlines()
            if not re.match(r'(\s*#|-r)', line)
        ]


requirements = load_reqs('requirements/base.txt')
test_requirements = load_reqs('requirements/test.txt')

setup(
    name='loadlab',
    version='0.1.0',
    description="Load profile clustering and longitudinal analytics for "
                "solar home system telemetry",
    long_description=readme + '\n\n' + history,
    author="loadlab developers",
    author_email='loadlab@users.noreply.github.com',
    packages=[
        'loadlab',
    ],
    package_dir={
        'loadlab': 'loadlab',
    },
    include_package_data=True,
    install_requires=requirements,
    python_requires='>=3.8',
    entry_points={
        'console_scripts': [
            'loadlab = loadlab.cli:main',
        ],
    },
    license="Apache Software License 2.0",
    zip_safe=False,
    keywords='solar-home-systems load-profiles dtw k-medoids',
    classifiers=[
        'Development Status :: 3 - Alpha',
        'Intended Audience :: Science/Research',
        'License :: OSI Approved :: Apache Software License',
        'Natural Language :: English',
        'Programming Language :: Python :: 3',
        'Programming Language :: Python :: 3.8',
        'Topic :: Scientific/Engineering',
    ],
    test_suite='tests',
    tests_require=test_requirements
)
