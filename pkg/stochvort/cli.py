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

"""Command line entry point.

    stochvort <subcommand> [--config FILE] [--<dotted.key> VALUE ...]

Settings come from the schema defaults, then the JSON config file (flat with
dotted keys, or nested), then flags. Each run writes into
``<output.dir>/<dataset_id>/<subcommand>/`` the effective configuration,
the CSV tables of the subcommand, a ``summary.txt`` of ``key = value`` lines
ending in ``passed = true|false`` and a JSON record.

Exit codes: 0 on success, 1 when an asserted bound failed, 2 on a usage or
configuration error.
"""

import argparse
import copy
import json
import numbers
import os
import sys
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Mapping, NamedTuple, Optional

import numpy as np
import pandas as pd

import stochvort
from stochvort.vorticity.diagnostics import (
    balance_report, coupling_distance, default_burn_in, energy_spectrum,
    high_mode_perturbation, moment_bound_check, slope_fit)
from stochvort.vorticity.forcing import (
    ForcingSpec, HormanderReport, hormander_check, validate_forcing)
from stochvort.vorticity.grid_spectral import GridSpec, VorticityState
from stochvort.vorticity.integrator import (
    BlowUpError, SimConfig, budget_residuals, checkpoint_load,
    checkpoint_save, ensemble_observables, simulate_ensemble)
from stochvort.vorticity.malliavin import (
    control_run, control_scan, from_galerkin, galerkin_basis,
    nondegeneracy_survey)
from stochvort.vorticity.tangent import TangentField, contraction_stat

SUBCOMMANDS = ('simulate', 'check-forcing', 'balance', 'spectrum',
               'contraction', 'malliavin-survey', 'control', 'couple')

EXAMPLE_FORCING = [[1, 0, 0.5], [-1, 0, 0.5], [1, 1, 0.5], [-1, -1, 0.5]]

SUMMARY_FN = 'summary.txt'

# Stokes surveys count as degenerate below this cone_min.
DEGENERATE_CONE_MIN = 1e-12


class ConfigError(ValueError):
    """A configuration value violates the schema."""


class Key(NamedTuple):
    kind: str
    default: Any
    help: str
    optional: bool = False


SCHEMA: Dict[str, Key] = {
    'dataset_id': Key('str', 'default', 'Name of the output dataset.'),
    'grid.n': Key('int', 64, 'Collocation points per axis.'),
    'grid.scale': Key('float', 1.0, 'Torus scale factor N.'),
    'grid.dealias_fraction': Key('float', 2 / 3,
                                 'Fraction of resolved modes retained.'),
    'nu': Key('float', 0.05, 'Viscosity.'),
    'tau': Key('float', 0.0, 'Ekman friction.'),
    'dt': Key('float', None, 'Time step; none selects the CFL step.', True),
    'dt_max': Key('float', 0.05, 'Upper bound for the CFL step.'),
    't_end': Key('float', 10.0, 'Length of the run.'),
    'seed': Key('int', 0, 'Root seed of the noise streams.'),
    'nonlinear': Key('bool', True, 'Include the transport term.'),
    'output_every': Key('int', 1, 'Record observables every this many '
                                  'steps.'),
    'snapshot_every': Key('int', 0, 'Keep the state every this many steps.'),
    'forcing.modes': Key('modes', EXAMPLE_FORCING,
                         'Forced [kx, ky, gamma] triples; [] runs unforced.'),
    'forcing.auto_reflect': Key('bool', False,
                                'Add missing reflection partners.'),
    'initial.path': Key('str', None, 'Snapshot file of the initial state.',
                        True),
    'ensemble.members': Key('int', 1, 'Number of ensemble members.'),
    'num_workers': Key('int', 1, 'Worker processes.'),
    'verbose': Key('bool', False, 'Print progress.'),
    'output.dir': Key('str', None, 'Output root; defaults to '
                                   '$STOCHVORT_OUTPUT_ROOT.', True),
    'balance.burn_in': Key('float', None, 'Start of the averaging window.',
                           True),
    'balance.batches': Key('int', 10, 'Batches per member.'),
    'balance.rtol': Key('float', 0.1, 'Tolerance on the balances.'),
    'spectrum.window_start': Key('float', None, 'First snapshot time '
                                                'averaged.', True),
    'spectrum.kappa_lo': Key('float', None, 'Lower end of the slope fit.',
                             True),
    'spectrum.kappa_hi': Key('float', None, 'Upper end of the slope fit.',
                             True),
    'spectrum.slope_min': Key('float', None, 'Smallest accepted slope.',
                              True),
    'spectrum.slope_max': Key('float', None, 'Largest accepted slope.',
                              True),
    'contraction.cutoffs': Key('floats', [4.0], 'Projection cutoffs.'),
    'contraction.T': Key('float', 1.0, 'Propagation time.'),
    'contraction.samples': Key('int', 8, 'Monte Carlo samples.'),
    'contraction.p': Key('float', 2.0, 'Moment order.'),
    'contraction.factor': Key('float', 2.0, 'Accepted factor against the '
                                            'diagonal prediction.'),
    'malliavin.galerkin_cutoff': Key('float', 4.0, 'Galerkin radius M_g.'),
    'malliavin.low_cutoff': Key('float', 2.0, 'Low-mode radius.'),
    'malliavin.alpha': Key('float', 0.1, 'Cone aperture.'),
    'malliavin.samples': Key('int', 50, 'Survey samples.'),
    'malliavin.interval': Key('float', 1.0, 'Interval length.'),
    'malliavin.spinup': Key('float', 0.0, 'Spin-up before the interval.'),
    'malliavin.initial_radius': Key('float', 1.0, 'Largest L2 norm of the '
                                                  'random initial data.'),
    'malliavin.quad_substeps': Key('int', None, 'Trapezoidal panels per '
                                                'interval.', True),
    'malliavin.stokes_control': Key('bool', True, 'Repeat the survey '
                                                  'without transport.'),
    'control.lambdas': Key('floats', [1e-3, 1e-2, 1e-1, 1.0],
                           'Tikhonov shifts to scan.'),
    'control.seeds': Key('int', 20, 'Number of seeds per shift.'),
    'control.n_intervals': Key('int', 12, 'Intervals per run.'),
    'control.max_rate': Key('float', 0.9, 'Accepted geometric rate.'),
    'control.identity_rtol': Key('float', 1e-8, 'Accepted control identity '
                                                'residual.'),
    'couple.T': Key('float', 10.0, 'Coupling time.'),
    'couple.low_cutoff': Key('float', 1.0, 'Split of the distance.'),
    'couple.perturbation_cutoff': Key('float', 4.0, 'The second copy '
                                                    'differs above this.'),
    'couple.amplitude': Key('float', 1.0, 'Initial distance.'),
    'couple.max_ratio': Key('float', 1.0, 'Accepted final/initial '
                                          'distance.'),
}


def _parse_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ('true', '1', 'yes'):
        return True
    if lowered in ('false', '0', 'no'):
        return False
    raise ValueError(text)


_TEXT_PARSERS: Dict[str, Callable[[str], Any]] = {
    'int': int,
    'float': float,
    'bool': _parse_bool,
    'str': str,
    'modes': json.loads,
    'floats': json.loads,
}


def _is_int(value) -> bool:
    return isinstance(value, numbers.Integral) and not isinstance(value, bool)


def _is_real(value) -> bool:
    return isinstance(value, numbers.Real) and not isinstance(value, bool)


def _normalize(key: str, kind: str, value):
    if kind == 'int' and _is_int(value):
        return int(value)
    if kind == 'float' and _is_real(value):
        return float(value)
    if kind == 'bool' and isinstance(value, bool):
        return value
    if kind == 'str' and isinstance(value, str):
        return value
    if (kind == 'floats' and isinstance(value, (list, tuple))
            and all(_is_real(x) for x in value)):
        return [float(x) for x in value]
    if (kind == 'modes' and isinstance(value, (list, tuple))
            and all(isinstance(t, (list, tuple)) and len(t) == 3
                    and all(_is_real(x) for x in t) for t in value)):
        return [[t[0], t[1], float(t[2])] for t in value]
    raise ConfigError("{}: expected {}, got {!r}".format(key, kind, value))


def coerce_value(key: str, value, from_text: bool = False):
    """Check one setting against the schema.

    Args:
        key: The dotted key.
        value: A JSON value, or flag text when ``from_text`` is set.
        from_text: Parse ``value`` from its command line spelling first.

    Raises:
        ConfigError: Naming the key on an unknown key or a type mismatch.
    """
    if key not in SCHEMA:
        raise ConfigError("Unknown config key '{}'".format(key))
    spec = SCHEMA[key]
    if from_text:
        text = value.strip()
        if spec.optional and text.lower() in ('none', 'null'):
            return None
        try:
            value = _TEXT_PARSERS[spec.kind](text)
        except ValueError:
            raise ConfigError("{}: cannot parse {!r} as {}"
                              .format(key, text, spec.kind)) from None
    if value is None:
        if spec.optional:
            return None
        raise ConfigError("{}: a value is required".format(key))
    return _normalize(key, spec.kind, value)


def flatten_config(obj: Mapping[str, Any], prefix: str = '') -> Dict[str, Any]:
    """Nested objects become dotted keys; flat files pass through."""
    flat = {}
    for name, value in obj.items():
        key = prefix + name
        if isinstance(value, dict):
            flat.update(flatten_config(value, key + '.'))
        else:
            flat[key] = value
    return flat


@dataclass(frozen=True)
class RunConfig:
    """Every schema key with its effective value.

    Attributes:
        values: Flat mapping from dotted key to value.
    """
    values: Mapping[str, Any]

    def __getitem__(self, key: str):
        return self.values[key]

    @property
    def dataset_id(self) -> str:
        return self['dataset_id']

    @property
    def output_dir(self) -> str:
        if self['output.dir'] is not None:
            return self['output.dir']
        return stochvort.output_root()

    def run_dir(self, subcommand: str) -> str:
        return os.path.join(self.output_dir, self.dataset_id, subcommand)

    def grid(self) -> GridSpec:
        try:
            return GridSpec(n=self['grid.n'], scale=self['grid.scale'],
                            dealias_fraction=self['grid.dealias_fraction'])
        except ValueError as e:
            raise ConfigError("grid: {}".format(e)) from None

    def forcing(self) -> Optional[ForcingSpec]:
        if not self['forcing.modes']:
            return None
        try:
            return validate_forcing(self['forcing.modes'],
                                    scale=self['grid.scale'],
                                    auto_reflect=self['forcing.auto_reflect'])
        except ValueError as e:
            raise ConfigError("forcing.modes: {}".format(e)) from None

    def sim_config(self, forcing: Optional[ForcingSpec] = None,
                   use_forcing: bool = True) -> SimConfig:
        """The SimConfig of these settings.

        Args:
            forcing: Use this forcing instead of ``forcing.modes``.
            use_forcing: Build the forcing from ``forcing.modes`` when
                ``forcing`` is None. Off, the configuration is unforced.
        """
        if forcing is None and use_forcing:
            forcing = self.forcing()
        try:
            return SimConfig(grid=self.grid(), nu=self['nu'],
                             tau=self['tau'], dt=self['dt'],
                             t_end=self['t_end'], forcing=forcing,
                             seed=self['seed'],
                             nonlinear=self['nonlinear'],
                             output_every=self['output_every'],
                             snapshot_every=self['snapshot_every'],
                             dt_max=self['dt_max'])
        except ConfigError:
            raise
        except ValueError as e:
            raise ConfigError("simulation: {}".format(e)) from None

    def initial_state(self, cfg: SimConfig) -> Optional[VorticityState]:
        if self['initial.path'] is None:
            return None
        try:
            return checkpoint_load(self['initial.path'], cfg)
        except OSError as e:
            raise ConfigError("initial.path: {}".format(e)) from None

    def effective(self) -> Dict[str, Any]:
        """The echoed configuration: every key plus the code version."""
        out = dict(self.values)
        out['version'] = stochvort.__version__
        return out


def parse_config(path: Optional[str] = None,
                 flags: Optional[Mapping[str, Any]] = None,
                 flags_are_text: bool = True) -> RunConfig:
    """Merge schema defaults, a JSON config file and flag overrides.

    Args:
        path: A JSON file, flat with dotted keys or nested.
        flags: Overrides keyed by dotted key.
        flags_are_text: The override values are command line text.

    Raises:
        ConfigError: On an unreadable file, an unknown key or a value of
            the wrong type. The message names the dotted key.
    """
    values = {key: copy.deepcopy(spec.default)
              for key, spec in SCHEMA.items()}
    if path is not None:
        try:
            with open(path) as f:
                raw = json.load(f)
        except (OSError, ValueError) as e:
            raise ConfigError("Cannot read config file {}: {}"
                              .format(path, e)) from None
        if not isinstance(raw, dict):
            raise ConfigError("Config file {} must hold a JSON object."
                              .format(path))
        for key, value in flatten_config(raw).items():
            values[key] = coerce_value(key, value)
    for key, value in (flags or {}).items():
        values[key] = coerce_value(key, value, from_text=flags_are_text)

    cfg = RunConfig(values=values)
    cfg.sim_config(use_forcing=False)
    return cfg


@stochvort.json_serializable_dataclass(namespace='stochvort',
                                       registry=stochvort.Registry,
                                       frozen=True)
class CliRun:
    """Record of one command line run.

    Attributes:
        dataset_id: The dataset the run writes into.
        subcommand: Which experiment was run.
    """
    dataset_id: str
    subcommand: str

    @property
    def fn(self):
        return f'{self.dataset_id}/{self.subcommand}/record'


def _plain(value):
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, numbers.Integral):
        return int(value)
    if isinstance(value, numbers.Real):
        return float(value)
    return value


def _format_value(value) -> str:
    value = _plain(value)
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_summary(summary: Mapping[str, Any], path: str):
    """``key = value`` lines in insertion order, ``passed`` last."""
    lines = [f'{key} = {_format_value(value)}'
             for key, value in summary.items() if key != 'passed']
    lines.append(f"passed = {_format_value(summary['passed'])}")
    with open(path, 'w') as f:
        f.write('\n'.join(lines) + '\n')


def _write_csv(frame: pd.DataFrame, run_dir: str, name: str):
    frame.to_csv(os.path.join(run_dir, name), index=False,
                 float_format='%.17g')


def print_hormander_warning(report: HormanderReport):
    print("WARNING: the forcing set does not meet the sufficient conditions "
          "for the bracket condition; the run continues.")
    for line in report.report_lines():
        print(f"    {line}")


def _forced_config(cfg: RunConfig) -> SimConfig:
    sim = cfg.sim_config()
    if sim.forcing is not None:
        report = hormander_check(sim.forcing)
        if not report.passed:
            print_hormander_warning(report)
    return sim


def _simulate(cfg: RunConfig, sim: SimConfig, run_dir: str):
    trajectories = simulate_ensemble(sim, cfg['ensemble.members'],
                                     cfg['num_workers'],
                                     initial=cfg.initial_state(sim))
    if len(trajectories) == 1:
        trajectories[0].save_csv(os.path.join(run_dir, 'observables.csv'))
    else:
        _write_csv(ensemble_observables(trajectories), run_dir,
                   'observables.csv')
    return trajectories


def run_simulate(cfg: RunConfig, run_dir: str) -> Dict[str, Any]:
    sim = _forced_config(cfg)
    trajectories = _simulate(cfg, sim, run_dir)
    first = trajectories[0]
    checkpoint_save(first.final, os.path.join(run_dir, 'final.vort'))
    for i, state in enumerate(first.snapshots):
        checkpoint_save(state, os.path.join(run_dir,
                                            f'snapshot-{i:06d}.vort'))
    last = first.observables.iloc[-1]
    summary = {
        'members': len(trajectories),
        'dt': first.dt,
        'n_steps': first.n_steps,
        'records': len(first.observables),
        'final_enstrophy': last['enstrophy'],
        'final_energy': last['energy'],
    }
    passed = True
    if sim.forcing is None and len(first.observables) > 1:
        # Without noise the enstrophy can only decay.
        residuals = budget_residuals(first)
        _write_csv(residuals, run_dir, 'budget.csv')
        scale = float(first.observables['enstrophy'].max())
        increase = float(residuals['d_enstrophy'].max())
        summary['max_enstrophy_increase'] = increase
        passed = increase <= 1e-12 * scale
    summary['passed'] = passed
    return summary


def run_check_forcing(cfg: RunConfig, run_dir: str) -> Dict[str, Any]:
    modes = cfg['forcing.modes']
    if not modes:
        raise ConfigError("forcing.modes: nothing to check in an empty set")
    report = hormander_check(modes)
    if report.passed:
        for line in report.report_lines():
            print(line)
    else:
        print_hormander_warning(report)

    try:
        spec = cfg.forcing()
    except ConfigError as e:
        print(f"Forcing cannot drive a simulation: {e}")
        spec = None
    nan = float('nan')
    return {
        'modes': len(modes),
        'cond_a': report.cond_a,
        'cond_b': report.cond_b,
        'cond_c': report.cond_c,
        'lattice_index': report.lattice_index,
        'hormander': 'pass' if report.passed else 'fail',
        'epsilon': nan if spec is None else spec.epsilon,
        'epsilon_prime': nan if spec is None else spec.epsilon_prime,
        'kappa_f': nan if spec is None else spec.kappa_f,
        'kappa_f_mean': nan if spec is None else spec.kappa_f_mean,
        'passed': spec is not None,
    }


def run_balance(cfg: RunConfig, run_dir: str) -> Dict[str, Any]:
    sim = _forced_config(cfg)
    if sim.forcing is None:
        raise ConfigError("forcing.modes: balances need a forced run")
    burn_in = cfg['balance.burn_in']
    if burn_in is None:
        burn_in = default_burn_in(sim)
    if burn_in >= sim.t_end:
        raise ConfigError("balance.burn_in: burn-in {:.4g} does not leave an "
                          "averaging window before t_end = {:.4g}"
                          .format(burn_in, sim.t_end))
    trajectories = _simulate(cfg, sim, run_dir)
    report = balance_report(trajectories, burn_in=burn_in,
                            batches=cfg['balance.batches'])
    moments = moment_bound_check(trajectories)
    _write_csv(moments.frame, run_dir, 'moments.csv')
    summary = dict(report.summary())
    summary['moments_passed'] = moments.passed
    summary['passed'] = report.passed(cfg['balance.rtol']) and moments.passed
    return summary


def run_spectrum(cfg: RunConfig, run_dir: str) -> Dict[str, Any]:
    sim = _forced_config(cfg)
    if sim.snapshot_every == 0:
        raise ConfigError("snapshot_every: the spectrum averages snapshots, "
                          "set a positive cadence")
    window_start = cfg['spectrum.window_start']
    if window_start is None:
        window_start = default_burn_in(sim)
    trajectories = _simulate(cfg, sim, run_dir)
    states = [s for traj in trajectories for s in traj.snapshots]
    spectrum = energy_spectrum(states, window_start=window_start)
    spectrum.save_csv(os.path.join(run_dir, 'spectrum.csv'))
    summary = {
        'samples': spectrum.samples,
        'window_start': window_start,
        'kappa_f': np.nan if sim.forcing is None else sim.forcing.kappa_f,
    }
    lo, hi = cfg['spectrum.kappa_lo'], cfg['spectrum.kappa_hi']
    passed = True
    if lo is not None and hi is not None:
        fit = slope_fit(spectrum, lo, hi, cfg=sim)
        summary.update({
            'slope': fit.slope,
            'slope_stderr': fit.stderr,
            'n_shells': fit.n_shells,
            'kappa_nu': fit.kappa_nu,
            'kappa_tau': fit.kappa_tau,
        })
        if cfg['spectrum.slope_min'] is not None:
            passed = passed and fit.slope >= cfg['spectrum.slope_min']
        if cfg['spectrum.slope_max'] is not None:
            passed = passed and fit.slope <= cfg['spectrum.slope_max']
    summary['passed'] = passed
    return summary


def run_contraction(cfg: RunConfig, run_dir: str) -> Dict[str, Any]:
    sim = _forced_config(cfg)
    omega0 = cfg.initial_state(sim)
    left, right = [], []
    summary = {}
    passed = True
    factor = cfg['contraction.factor']
    for cutoff in cfg['contraction.cutoffs']:
        stat = contraction_stat(sim, cutoff, cfg['contraction.T'],
                                cfg['contraction.samples'],
                                p=cfg['contraction.p'], omega0=omega0,
                                num_workers=cfg['num_workers'],
                                verbose=cfg['verbose'])
        left.append(stat.to_frame('left'))
        right.append(stat.to_frame('right'))
        estimate = stat.moment('left')[0] ** (1 / stat.p)
        summary[f'diagonal_{cutoff:g}'] = stat.diagonal
        summary[f'estimate_{cutoff:g}'] = estimate
        summary[f'converged_{cutoff:g}'] = bool(np.all(stat.converged))
        if stat.diagonal > 0:
            ratio = estimate / stat.diagonal
            passed = passed and 1 / factor <= ratio <= factor
    _write_csv(pd.concat(left, ignore_index=True), run_dir,
               'contraction.csv')
    _write_csv(pd.concat(right, ignore_index=True), run_dir,
               'contraction-right.csv')
    summary['passed'] = passed
    return summary


def _low_modes_unforced(sim: SimConfig, low_cutoff: float) -> bool:
    basis = galerkin_basis(sim.grid, low_cutoff)
    forced = {(m1, m2) for m1, m2, _ in sim.forcing.modes}
    return any((int(a), int(b)) not in forced
               for a, b in zip(basis.m1, basis.m2))


def run_malliavin_survey(cfg: RunConfig, run_dir: str) -> Dict[str, Any]:
    sim = _forced_config(cfg)
    if sim.forcing is None:
        raise ConfigError("forcing.modes: the survey needs a forced run")
    result = nondegeneracy_survey(
        sim, cfg['malliavin.galerkin_cutoff'], cfg['malliavin.low_cutoff'],
        cfg['malliavin.alpha'], cfg['malliavin.samples'],
        interval=cfg['malliavin.interval'], spinup=cfg['malliavin.spinup'],
        initial_radius=cfg['malliavin.initial_radius'],
        quad_substeps=cfg['malliavin.quad_substeps'],
        stokes_control=cfg['malliavin.stokes_control'],
        num_workers=cfg['num_workers'], verbose=cfg['verbose'])
    _write_csv(result.samples, run_dir, 'survey.csv')
    summary = {'samples': len(result.samples), 'median': result.median}
    for level, value in result.quantiles.items():
        summary[f'q{level:g}'] = value
    summary['tail_exponent'] = result.tail.exponent
    summary['tail_points'] = result.tail.points

    passed = result.median > 0 if sim.nonlinear else True
    if result.stokes is not None:
        _write_csv(result.stokes, run_dir, 'survey-stokes.csv')
        stokes_max = float(result.stokes['cone_min'].max())
        summary['stokes_max'] = stokes_max
        if _low_modes_unforced(sim, cfg['malliavin.low_cutoff']):
            passed = passed and stokes_max <= DEGENERATE_CONE_MIN
    summary['passed'] = passed
    return summary


def run_control(cfg: RunConfig, run_dir: str) -> Dict[str, Any]:
    sim = _forced_config(cfg)
    if sim.forcing is None:
        raise ConfigError("forcing.modes: control needs a forced run")
    if cfg['control.seeds'] < 1:
        raise ConfigError("control.seeds: need at least one seed")
    galerkin = cfg['malliavin.galerkin_cutoff']
    low = cfg['malliavin.low_cutoff']
    n_intervals = cfg['control.n_intervals']
    interval = cfg['malliavin.interval']
    quad = cfg['malliavin.quad_substeps']
    seeds = [sim.seed + i for i in range(cfg['control.seeds'])]

    scan = control_scan(sim, cfg['control.lambdas'], seeds, galerkin, low,
                        n_intervals, interval=interval, quad_substeps=quad,
                        num_workers=cfg['num_workers'])
    _write_csv(scan.ratios, run_dir, 'control-ratios.csv')
    _write_csv(scan.rates, run_dir, 'control-rates.csv')
    best = scan.rates.loc[scan.rates['rate'].idxmin()]

    # One reference run at the best shift for the per-interval records.
    basis = galerkin_basis(sim.grid, low)
    rng = np.random.default_rng([sim.seed, 7])
    xi0 = TangentField(sim.grid, from_galerkin(
        rng.standard_normal(basis.size), basis))
    run = control_run(sim, xi0, float(best['lam']), galerkin, low,
                      n_intervals, interval, quad, verbose=cfg['verbose'])
    run.save_csv(os.path.join(run_dir, 'control.csv'))
    records = run.records
    start = records['rho_norm'].values[:-1]
    identity = records['identity_residual'].values[1:]
    controlled = ~np.isnan(identity)
    worst = float(np.max(identity[controlled] / start[controlled]))

    return {
        'seeds': len(seeds),
        'best_lambda': best['lam'],
        'best_rate': best['rate'],
        'best_rate_stderr': best['rate_stderr'],
        'identity_residual': worst,
        'passed': (best['rate'] < cfg['control.max_rate']
                   and worst <= cfg['control.identity_rtol']),
    }


def run_couple(cfg: RunConfig, run_dir: str) -> Dict[str, Any]:
    sim = _forced_config(cfg)
    omega_a = cfg.initial_state(sim)
    if omega_a is None:
        omega_a = VorticityState.zeros(sim.grid)
    rng = np.random.default_rng([sim.seed, 11])
    bump = high_mode_perturbation(sim.grid, cfg['couple.perturbation_cutoff'],
                                  cfg['couple.amplitude'], rng)
    omega_b = omega_a.with_coeffs(omega_a.coeffs + bump.coeffs)
    frame = coupling_distance(sim, omega_a, omega_b, cfg['couple.T'],
                              low_cutoff=cfg['couple.low_cutoff'])
    _write_csv(frame, run_dir, 'coupling.csv')
    initial = float(frame['dist'].iloc[0])
    final = float(frame['dist'].iloc[-1])
    ratio = final / initial
    return {
        'initial_dist': initial,
        'final_dist': final,
        'final_dist_low': frame['dist_low'].iloc[-1],
        'final_dist_high': frame['dist_high'].iloc[-1],
        'ratio': ratio,
        'passed': ratio <= cfg['couple.max_ratio'],
    }


RUNNERS: Dict[str, Callable[[RunConfig, str], Dict[str, Any]]] = {
    'simulate': run_simulate,
    'check-forcing': run_check_forcing,
    'balance': run_balance,
    'spectrum': run_spectrum,
    'contraction': run_contraction,
    'malliavin-survey': run_malliavin_survey,
    'control': run_control,
    'couple': run_couple,
}


def run(subcommand: str, cfg: RunConfig) -> int:
    """Dispatch a subcommand and write its outputs.

    Returns:
        The exit code: 0 on success, 1 when an asserted bound failed and 2
        on a configuration error.
    """
    if subcommand not in RUNNERS:
        print(f"error: unknown subcommand {subcommand!r}; choose from "
              f"{', '.join(SUBCOMMANDS)}")
        return 2
    run_dir = cfg.run_dir(subcommand)
    os.makedirs(run_dir, exist_ok=True)
    with open(os.path.join(run_dir, stochvort.EFFECTIVE_CONFIG_FN), 'w') as f:
        json.dump(cfg.effective(), f, indent=2, sort_keys=True)

    try:
        summary = RUNNERS[subcommand](cfg, run_dir)
    except BlowUpError as e:
        print(f"error: {e}")
        return 1
    except ValueError as e:
        print(f"error: {e}")
        return 2

    summary = {key: _plain(value) for key, value in summary.items()}
    write_summary(summary, os.path.join(run_dir, SUMMARY_FN))
    stochvort.save(task=CliRun(dataset_id=cfg.dataset_id,
                               subcommand=subcommand),
                   data={'config': cfg.effective(), 'summary': summary},
                   base_dir=cfg.output_dir, mode='w')
    print(f"{subcommand}: passed = {_format_value(summary['passed'])}; "
          f"outputs in {run_dir}")
    return 0 if summary['passed'] else 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', default=None,
                        help='JSON config file, flat or nested.')
    for key, spec in SCHEMA.items():
        common.add_argument(f'--{key}', dest=key, default=None,
                            metavar=spec.kind.upper(), help=spec.help)

    parser = argparse.ArgumentParser(
        prog='stochvort',
        description='Stochastic 2D Navier-Stokes experiments.')
    parser.add_argument('--version', action='version',
                        version=f'stochvort {stochvort.__version__}')
    subparsers = parser.add_subparsers(dest='subcommand', metavar='SUBCOMMAND')
    subparsers.required = True
    for name in SUBCOMMANDS:
        subparsers.add_parser(name, parents=[common], allow_abbrev=False)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code

    options = vars(args)
    flags = {key: options[key] for key in SCHEMA if options[key] is not None}
    try:
        cfg = parse_config(options['config'], flags)
    except ConfigError as e:
        print(f"error: {e}")
        return 2
    return run(args.subcommand, cfg)


if __name__ == '__main__':
    sys.exit(main())
