from pathlib import Path

from ... import constants
from ...exceptions import ConfigError
from ...serializers import (
    HeatingResultSerializer,
    HeatingRowSerializer,
    NoiseRowSerializer,
    SignalMetaSerializer,
    SignalRowSerializer,
)
from ...tasks import TRIALS, run_montecarlo
from ...thermometry import (
    MotionalState,
    Sideband,
    SidebandSignal,
    fit_heating_rate,
    fit_nbar,
    heating_table,
    heating_to_noise,
    lamb_dicke,
    noise_to_heating,
    noisy_signal,
    probe_durations,
    rabi_flop,
    trial_rng,
)
from ...utils import read_csv, read_json, validated
from ..base import TrapCommand

MONTECARLO_PASS_FRACTION = 0.95


class Command(TrapCommand):
    help = 'Sideband thermometry: simulate or fit Rabi flops, fit heating rates, convert to field noise'

    def add_command_arguments(self, parser):
        parser.add_argument(
            'action',
            choices=['simulate', 'fit', 'noise', 'montecarlo'],
            help='simulate a flop trace, fit a trace or heating series, tabulate noise, or run Monte-Carlo trials',
        )
        parser.add_argument(
            '--nbar',
            type=float,
            default=1.0,
            help='Mean phonon number for simulate (default: 1.0)',
        )
        parser.add_argument(
            '--kind',
            type=str,
            help='Sideband for simulate and fit (red, blue, carrier; default: blue) '
                 'or Monte-Carlo kind (nbar, heating, both; default: both)',
        )
        parser.add_argument(
            '--axial-frequency-hz',
            type=float,
            default=constants.AXIAL_FREQUENCY,
            help=f'Mode frequency in Hz (default: {constants.AXIAL_FREQUENCY})',
        )
        parser.add_argument(
            '--carrier-rabi-hz',
            type=float,
            default=100e3,
            help='Carrier Rabi frequency in Hz (default: 100e3)',
        )
        parser.add_argument(
            '--points',
            type=int,
            default=25,
            help='Probe durations for simulate (default: 25)',
        )
        parser.add_argument(
            '--periods',
            type=float,
            default=2.0,
            help='Sideband Rabi periods covered by the probe durations (default: 2)',
        )
        parser.add_argument(
            '--sigma',
            type=float,
            help='Gaussian noise on simulated probabilities',
        )
        parser.add_argument(
            '--shots',
            type=int,
            help='Projection-noise shots per simulated point (overrides --sigma)',
        )
        parser.add_argument(
            '--signal',
            type=str,
            help='Signal CSV (duration_s, probability[, sigma]) to fit',
        )
        parser.add_argument(
            '--meta',
            type=str,
            help='JSON with kind, carrier_rabi_rad_s and eta for --signal (default: from the flags)',
        )
        parser.add_argument(
            '--fit-rabi',
            action='store_true',
            help='Fit the sideband Rabi frequency together with nbar',
        )
        parser.add_argument(
            '--heating',
            type=str,
            help='Heating series CSV (wait_s, nbar, sigma) to fit',
        )
        parser.add_argument(
            '--rate',
            type=float,
            help='Heating rate in phonons/s to convert to a noise density',
        )
        parser.add_argument(
            '--noise-density',
            type=float,
            help='Field noise density in V^2 m^-2 Hz^-1 to convert to a heating rate',
        )
        parser.add_argument(
            '--runs',
            type=int,
            help='Monte-Carlo trials per kind (default: montecarlo_runs from the config)',
        )

    def run(self, **options):
        action = options['action']
        if action == 'simulate':
            self.simulate(options)
        elif action == 'fit':
            self.fit(options)
        elif action == 'noise':
            self.noise(options)
        else:
            self.montecarlo(options)

    def _frequency(self, options):
        if not options['axial_frequency_hz'] > 0:
            raise ConfigError('--axial-frequency-hz must be positive')
        return constants.angular(options['axial_frequency_hz'])

    def simulate(self, options):
        name = options['kind'] or Sideband.BLUE.value
        if name not in [s.value for s in Sideband]:
            raise ConfigError(f"--kind must be red, blue or carrier for simulate, got '{name}'")
        if options['points'] < 2:
            raise ConfigError('--points must be at least 2')
        frequency = self._frequency(options)
        carrier_rabi = constants.angular(options['carrier_rabi_hz'])
        eta = lamb_dicke(self.config.ion, frequency)
        kind = Sideband(name)
        rabi = carrier_rabi if kind == Sideband.CARRIER else carrier_rabi * eta
        durations = probe_durations(rabi, options['points'], options['periods'])
        signal = rabi_flop(MotionalState(options['nbar'], frequency), kind, carrier_rabi, eta, durations)
        if options['shots'] is not None or options['sigma'] is not None:
            rng = trial_rng(self.config.seed, 0)
            signal = noisy_signal(signal, rng, sigma=options['sigma'], shots=options['shots'])

        sigmas = signal.uncertainties or (None,) * len(signal.durations)
        rows = list(zip(signal.durations, signal.probabilities, sigmas))
        self.emit_csv('signal', ['duration_s', 'probability', 'sigma'], rows)
        self.emit_json('signal', {
            'kind': signal.kind.value,
            'nbar': options['nbar'],
            'carrier_rabi_rad_s': signal.carrier_rabi,
            'eta': signal.eta,
            'lamb_dicke_ok': signal.lamb_dicke_ok,
            'seed': self.config.seed,
            'rows': [{'duration_s': t, 'probability': p, 'sigma': s} for t, p, s in rows],
        })
        if not signal.lamb_dicke_ok:
            self.stdout.write(self.style.WARNING(f'eta = {eta:.4f} is outside the Lamb-Dicke regime at nbar = '
                                                 f"{options['nbar']}"))
        self.stdout.write(self.style.SUCCESS(f'Simulated {len(rows)} {kind.value}-sideband points (eta = {eta:.4f})'))

    def _load_signal(self, options):
        path = Path(options['signal'])
        if path.suffix == '.json':
            data = read_json(path, 'signal file')
            rows = data.get('rows', []) if isinstance(data, dict) else data
            meta_data = data if isinstance(data, dict) else {}
        else:
            rows = read_csv(path, 'signal file')
            meta_data = None
        rows = validated(SignalRowSerializer, rows, f'signal file {path}', many=True).validated_data

        if options['meta']:
            meta_data = read_json(Path(options['meta']), 'signal metadata')
        if not meta_data:
            meta_data = {
                'kind': options['kind'] or Sideband.BLUE.value,
                'carrier_rabi_rad_s': constants.angular(options['carrier_rabi_hz']),
                'eta': lamb_dicke(self.config.ion, self._frequency(options)),
            }
        meta_data = {k: meta_data[k] for k in ('kind', 'carrier_rabi_rad_s', 'eta') if k in meta_data}
        meta = validated(SignalMetaSerializer, meta_data, 'signal metadata').validated_data

        sigmas = [row.get('sigma') for row in rows]
        return SidebandSignal(
            durations=tuple(row['duration_s'] for row in rows),
            probabilities=tuple(row['probability'] for row in rows),
            kind=Sideband(meta['kind']),
            carrier_rabi=meta['carrier_rabi_rad_s'],
            eta=meta['eta'],
            uncertainties=tuple(sigmas) if all(s is not None for s in sigmas) else None,
        )

    def fit(self, options):
        if bool(options['signal']) == bool(options['heating']):
            raise ConfigError('fit needs exactly one of --signal or --heating')
        if options['signal']:
            signal = self._load_signal(options)
            result = fit_nbar(signal, fit_rabi=options['fit_rabi'])
            payload = {
                'nbar': result.nbar,
                'nbar_error': result.error,
                'sideband_rabi_rad_s': result.rabi,
                'kind': signal.kind.value,
                'residuals': list(result.residuals),
            }
            self.emit_json('nbar_fit', payload)
            self.stdout.write(self.style.SUCCESS(f'nbar = {result.nbar:.4f} +/- {result.error:.4f}'))
            return

        path = Path(options['heating'])
        rows = validated(HeatingRowSerializer, read_csv(path, 'heating file'), f'heating file {path}',
                         many=True).validated_data
        series = [(row['wait_s'], row['nbar'], row['sigma']) for row in rows]
        result = fit_heating_rate(series, self._frequency(options), self.config.ion)
        self.emit_json('heating_fit', HeatingResultSerializer(result).data)
        line = f'heating rate = {result.rate:.4f} +/- {result.rate_error:.4f} phonons/s'
        if result.noise_density is None:
            self.stdout.write(self.style.WARNING(f'{line}, negative slope: no noise density'))
            return
        self.stdout.write(self.style.SUCCESS(f'{line}, S_E = {result.noise_density:.3e} V^2/m^2/Hz'))

    def noise(self, options):
        frequency = self._frequency(options)
        ion = self.config.ion
        if options['rate'] is not None or options['noise_density'] is not None:
            payload = {'axial_frequency_hz': options['axial_frequency_hz']}
            if options['rate'] is not None:
                payload['rate_phonons_per_s'] = options['rate']
                payload['noise_density_v2_m2_hz'] = heating_to_noise(options['rate'], frequency, ion)
            else:
                payload['noise_density_v2_m2_hz'] = options['noise_density']
                payload['rate_phonons_per_s'] = noise_to_heating(options['noise_density'], frequency, ion)
            self.emit_json('noise', payload)
            self.stdout.write(self.style.SUCCESS(
                f"ndot = {payload['rate_phonons_per_s']:.4g} phonons/s <-> "
                f"S_E = {payload['noise_density_v2_m2_hz']:.4g} V^2/m^2/Hz"))
            return

        table = heating_table(ion=ion)
        data = NoiseRowSerializer(table, many=True).data
        self.emit_json('noise_table', {'rows': data})
        self.emit_csv('noise_table', list(table[0]._fields), table)
        for row in table:
            self.stdout.write(f'  trap {row.trap}: {row.rate:.2f} +/- {row.rate_error:.2f} phonons/s at '
                              f'{row.axial_frequency_hz / 1e6:.3f} MHz -> '
                              f'{row.noise_density:.2e} +/- {row.noise_density_error:.1e} V^2/m^2/Hz')
        self.stdout.write(self.style.SUCCESS(f'Converted {len(table)} heating rates'))

    def montecarlo(self, options):
        kind = options['kind'] or 'both'
        kinds = sorted(TRIALS) if kind == 'both' else [kind]
        if any(k not in TRIALS for k in kinds):
            raise ConfigError(f"--kind must be nbar, heating or both for montecarlo, got '{kind}'")
        runs = options['runs'] or self.config.montecarlo_runs
        if runs < 1:
            raise ConfigError('--runs must be positive')

        payload, rows, low = {}, [], []
        for name in kinds:
            summary = run_montecarlo(name, runs, self.config.seed)
            payload[name] = {
                'runs': summary.runs,
                'within': summary.within,
                'failures': summary.failures,
                'fraction': summary.fraction,
                'coverage_sigma': summary.coverage_sigma,
                'outcomes': [o._asdict() for o in summary.outcomes],
            }
            rows.extend((name, *o) for o in summary.outcomes)
            self.stdout.write(f'  {name}: {summary.within}/{summary.runs} within '
                              f'{summary.coverage_sigma:.0f} sigma ({summary.fraction:.1%})')
            if summary.fraction < MONTECARLO_PASS_FRACTION:
                low.append(name)
        self.emit_json('montecarlo', {'seed': self.config.seed, **payload})
        self.emit_csv('montecarlo', ['kind', 'index', 'truth', 'estimate', 'error', 'within'], rows)
        if low:
            self.fail(f"Monte-Carlo coverage below {MONTECARLO_PASS_FRACTION:.0%} for {', '.join(low)}")
        self.stdout.write(self.style.SUCCESS('Monte-Carlo coverage met'))
