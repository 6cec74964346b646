# Copyright 2026 The stochvort Developers
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     https://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

from setuptools import find_packages, setup

__version__ = ''
exec(open('stochvort/_version.py').read())
assert __version__, 'Version string cannot be empty'


def runtime_requirements():
    """Requirements listed before the development block."""
    reqs = []
    with open('requirements.txt') as f:
        for line in f:
            line = line.strip()
            if line.startswith('# development'):
                break
            if line and not line.startswith('#'):
                reqs.append(line)
    return reqs


setup(name='stochvort',
      version=__version__,
      author='The stochvort Developers',
      python_requires='>=3.8.0',
      install_requires=runtime_requirements(),
      license='Apache 2',
      description="Stochastic 2D Navier-Stokes simulations and the "
                  "diagnostics of their ergodic behavior.",
      long_description=open('README.md', encoding='utf-8').read(),
      long_description_content_type='text/markdown',
      packages=find_packages(exclude=['docs', 'examples']),
      entry_points={
          'console_scripts': ['stochvort=stochvort.cli:main'],
      },
      )
