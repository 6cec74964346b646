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

from stochvort.vorticity.experiments.hypoellipticity_tasks import (
    NondegeneracySurveyTask, run_nondegeneracy_survey)
from stochvort.vorticity.forcing import validate_forcing
from stochvort.vorticity.grid_spectral import GridSpec
from stochvort.vorticity.integrator import SimConfig

# The smallest admissible forcing: two unequal wavevectors and their partners.
DEGENERATE_MODES = [[1, 0, 0.5], [-1, 0, 0.5], [1, 1, 0.5], [-1, -1, 0.5]]


def main():
    grid = GridSpec(n=16)
    configs = [
        SimConfig(grid=grid, nu=0.1, tau=0.0, dt=0.01,
                  forcing=validate_forcing(DEGENERATE_MODES),
                  seed=2026, nonlinear=nonlinear)
        for nonlinear in [True, False]
    ]
    tasks = [
        NondegeneracySurveyTask(
            dataset_id='2026-10-01',
            config=cfg,
            galerkin_cutoff=4.0,
            low_cutoff=2.0,
            alpha=alpha,
            samples=50,
            interval=1.0,
            spinup=2.0,
            quad_substeps=20)
        for cfg in configs
        for alpha in [0.1, 0.5]
    ]

    for task in tasks:
        run_nondegeneracy_survey(task, num_workers=4)


if __name__ == '__main__':
    main()
