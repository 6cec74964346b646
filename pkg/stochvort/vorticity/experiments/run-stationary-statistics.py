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

from stochvort.vorticity.experiments.simulation_tasks import (
    StationaryStatisticsTask, load_stationary_statistics,
    run_stationary_statistics)
from stochvort.vorticity.forcing import validate_forcing
from stochvort.vorticity.grid_spectral import GridSpec
from stochvort.vorticity.integrator import SimConfig

DEGENERATE_MODES = [[1, 0, 0.5], [-1, 0, 0.5], [1, 1, 0.5], [-1, -1, 0.5]]


def main():
    tasks = [
        StationaryStatisticsTask(
            dataset_id='2026-10-01',
            config=SimConfig(grid=GridSpec(n=64), nu=nu, tau=tau,
                             t_end=200.0,
                             forcing=validate_forcing(DEGENERATE_MODES),
                             seed=2026, output_every=10,
                             snapshot_every=200),
            members=128)
        # The friction runs double as a viscosity ladder for the dissipation
        # trend.
        for nu, tau in [(0.1, 0.0), (0.1, 0.05), (0.05, 0.05), (0.02, 0.05)]
    ]

    for task in tasks:
        run_stationary_statistics(task, num_workers=8)

    trend = load_stationary_statistics('2026-10-01')
    print(trend[['nu', 'tau', 'viscous_enstrophy', 'friction_enstrophy',
                 'enstrophy_residual', 'energy_residual']]
          .to_string(index=False))


if __name__ == '__main__':
    main()
