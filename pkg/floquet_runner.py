import argparse
import csv
import dataclasses
import io
import json
import logging
import math
import os
import sys

import numpy as np

from classify import (critical_points, definiteness_radius, interval_partition,
                      negative_squares, with_diagnostic)
from coefficients import infinity_condition, load_coefficients, validate
from discriminant import scan
from errors import CoefficientError, FloquetError, NumericalFailure
from greens import ResolventRequest, apply_resolvent
from spectrum import Box, eigenvalues_in_box, real_bands, trace_curves
from transfer import check_tolerance, solve_trace

SCHEMA_VERSION = 1
CSV_HEADER = f"# floquet-engine schema {SCHEMA_VERSION}"

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERICAL = 3

DEFAULT_CONFIG = {
    'tolerance': 1e-10,
    'scan_points': 2000,
    'seed_density': 16,
    'max_roots': 200,
    'output_format': 'csv',
}

KAPPA_SAMPLES = 20


def _number_text(value):
    if isinstance(value, (bool, np.bool_)):
        return 'true' if value else 'false'
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _jsonable(value):
    if isinstance(value, complex):
        return [value.real, value.imag]
    if isinstance(value, np.generic):
        return _jsonable(value.item())
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if hasattr(value, 'value') and hasattr(value, 'name'):
        return value.value
    return value


def _pair(text, name):
    try:
        values = [float(v) for v in text.split(',')]
    except ValueError:
        raise argparse.ArgumentTypeError(f"{name} expects comma separated numbers, got '{text}'")
    return values


class FloquetRunner:
    def __init__(self, args):
        self.args = args
        self.config = self.load_config(args.config)
        self.tolerance = self.resolve_tolerance()
        self.output_format = args.format or self.config.get('output_format', 'csv')

    def load_config(self, config_file):
        """Load configuration from the config file, falling back to defaults"""
        config = dict(DEFAULT_CONFIG)
        try:
            if os.path.exists(config_file):
                with open(config_file, 'r') as f:
                    config.update(json.load(f))
                    logging.info(f"Loaded configuration from {config_file}")
            else:
                logging.info(f"No config file found at {config_file}, using defaults")
        except Exception as e:
            logging.error(f"Error loading config file: {e}")
        return config

    def resolve_tolerance(self):
        """Command line beats FLOQUET_TOL beats the config file"""
        tol = self.config.get('tolerance', DEFAULT_CONFIG['tolerance'])
        env_tol = os.getenv('FLOQUET_TOL')
        if env_tol:
            tol = float(env_tol)
        if self.args.tol is not None:
            tol = self.args.tol
        return check_tolerance(tol)

    def load_problem(self):
        cs = load_coefficients(self.args.input)
        violations = validate(cs)
        if violations and self.args.command != 'check':
            raise CoefficientError(f"{len(violations)} invalid coefficient properties",
                                   violations=[str(v) for v in violations])
        return cs, violations

    # ------------------------------------------------------------------
    # Output

    def write_table(self, header, rows, extra=None):
        if self.output_format == 'json':
            payload = {'schema': SCHEMA_VERSION, 'columns': header, 'rows': rows}
            payload.update(extra or {})
            self.write_json(payload)
            return
        buffer = io.StringIO()
        buffer.write(CSV_HEADER + '\n')
        writer = csv.writer(buffer, lineterminator='\n')
        writer.writerow(header)
        for row in rows:
            writer.writerow([_number_text(v) for v in row])
        self.emit(buffer.getvalue())

    def write_json(self, payload):
        payload = dict(payload)
        payload.setdefault('schema', SCHEMA_VERSION)
        self.emit(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + '\n')

    def emit(self, text):
        if self.args.output:
            with open(self.args.output, 'w') as f:
                f.write(text)
            logging.info(f"Wrote {self.args.output}")
        else:
            sys.stdout.write(text)

    # ------------------------------------------------------------------
    # Inputs

    def parse_inputs(self):
        """Turn boxes, windows and sampled functions into checked values before any numerics run"""
        args = self.args
        if getattr(args, 'box', None) is not None:
            if len(args.box) != 4:
                raise ValueError(f"--box expects re_lo,re_hi,im_lo,im_hi, got {args.box}")
            self.box = Box(*args.box)
        else:
            self.box = None
        if getattr(args, 'window', None) is not None:
            if len(args.window) != 2 or not args.window[0] < args.window[1]:
                raise ValueError(f"--window expects lo,hi with lo < hi, got {args.window}")
            self.window = tuple(args.window)
        if args.command == 'resolve':
            self.request = self.read_request()

    def read_request(self):
        grid, values = [], []
        with open(self.args.g, 'r') as f:
            for row in csv.reader(line for line in f if not line.startswith('#')):
                if not row or row[0] == 'x':
                    continue
                grid.append(float(row[0]))
                values.append(complex(float(row[1]), float(row[2]) if len(row) > 2 else 0.0))
        return ResolventRequest(z=complex(self.args.z), lam=complex(self.args.lam),
                                grid=np.array(grid), values=np.array(values))

    # ------------------------------------------------------------------
    # Subcommands

    def cmd_scan(self, cs):
        re_range, im_range = self.args.re, self.args.im
        samples = scan(cs, re_range, im_range, self.args.n, self.tolerance)
        rows = [[s.lam.real, s.lam.imag, s.D.real, s.D.imag, s.Ddot.real, s.Ddot.imag,
                 s.residual_cross_check, s.flagged] for s in samples]
        self.write_table(['lam_re', 'lam_im', 'D_re', 'D_im', 'Ddot_re', 'Ddot_im',
                          'cross_check', 'flagged'], rows)

    def cmd_bands(self, cs):
        lo, hi = self.window
        bands = real_bands(cs, lo, hi, self.config['scan_points'], self.tolerance)
        rows = [[b.lo, b.hi, b.d_lo, b.d_hi, b.monotone, b.lo_kind.value, b.hi_kind.value]
                for b in bands]
        self.write_table(['lo', 'hi', 'd_lo', 'd_hi', 'monotone', 'lo_kind', 'hi_kind'], rows)

    def cmd_curves(self, cs):
        # always JSON: curves are nested
        curves = trace_curves(cs, self.box, self.config['seed_density'], self.tolerance,
                              self.config['max_roots'])
        self.write_json({
            'box': self.box.as_list(),
            'curves': [{
                'points': [[p.t, p.lam.real, p.lam.imag] for p in curve.points],
                'start_reason': curve.start_reason.value,
                'end_reason': curve.end_reason.value,
                'is_real': curve.is_real,
            } for curve in curves],
        })

    def cmd_eigs(self, cs):
        found = eigenvalues_in_box(cs, self.args.t, self.box, self.config['max_roots'], self.tolerance)
        rows = [[r.lam.real, r.lam.imag, r.multiplicity, r.newton_residual] for r in found.roots]
        self.write_table(['lam_re', 'lam_im', 'multiplicity', 'newton_residual'], rows,
                         extra={'t': found.t, 'box': found.box.as_list(),
                                'contour_count': found.contour_count})

    def cmd_classify(self, cs):
        lo, hi = self.window
        partition = interval_partition(cs, lo, hi, self.config['scan_points'], self.tolerance)
        box = self.box or Box(lo, hi, -1.0, 1.0)
        reports = [with_diagnostic(cs, r, self.tolerance)
                   for r in critical_points(cs, box, max_roots=self.config['max_roots'],
                                            tol=self.tolerance)]
        ts = np.linspace(0.0, math.pi, KAPPA_SAMPLES)
        kappas = [negative_squares(cs, t, self.tolerance, self.config['max_roots']) for t in ts]
        radius = definiteness_radius(cs, window=max(abs(lo), abs(hi)),
                                     n_scan=self.config['scan_points'], tol=self.tolerance,
                                     max_roots=self.config['max_roots'])
        self.write_json({
            'window': [lo, hi],
            'partition': [p.to_dict() for p in partition],
            'critical_points': [r.to_dict() for r in reports],
            'kappa': [{'t': k.t, 'kappa': k.kappa} for k in kappas],
            'kappa_star': kappas[0].kappa_star,
            'lower_bound_used': kappas[0].lower_bound_used,
            'radii': radius.to_dict(),
        })

    def cmd_resolve(self, cs):
        result = apply_resolvent(cs, self.request, self.tolerance)
        self.write_table(['x', 'f_re', 'f_im', 'pf_re', 'pf_im'], result.to_rows())

    def cmd_check(self, cs, violations):
        report = {'violations': [str(v) for v in violations]}
        if not violations:
            check = infinity_condition(cs)
            report['infinity_condition'] = {
                'holds': check.holds,
                'turning_points': [dataclasses.asdict(r) for r in check.turning_points],
                'witnesses': [r.location for r in check.witnesses],
            }
        self.write_json(report)
        return EXIT_INVALID if violations else EXIT_OK

    def cmd_trace(self, cs):
        trace = solve_trace(cs, complex(self.args.lam), self.args.n, self.tolerance)
        header = ['x'] + [f"{name}_{part}" for name in ('phi', 'pphi', 'psi', 'ppsi')
                          for part in ('re', 'im')]
        self.write_table(header, trace.to_rows())

    def run(self):
        """Run one subcommand and map failures onto exit codes"""
        logging.info(f"Running '{self.args.command}' on {self.args.input} (tol={self.tolerance})")
        try:
            cs, violations = self.load_problem()
            self.parse_inputs()
        except (CoefficientError, OSError, ValueError) as e:
            logging.error(f"Invalid input: {e}")
            self.diagnose(e)
            return EXIT_INVALID
        try:
            if self.args.command == 'check':
                return self.cmd_check(cs, violations)
            getattr(self, f"cmd_{self.args.command}")(cs)
        except (CoefficientError, OSError) as e:
            logging.error(f"Invalid input: {e}")
            self.diagnose(e)
            return EXIT_INVALID
        except (NumericalFailure, ValueError, ArithmeticError) as e:
            logging.error(f"Numerical failure: {e}")
            self.diagnose(e)
            return EXIT_NUMERICAL
        logging.info(f"'{self.args.command}' completed")
        return EXIT_OK

    @staticmethod
    def diagnose(error):
        if isinstance(error, FloquetError):
            payload = error.to_dict()
        else:
            payload = {'error': type(error).__name__, 'message': str(error)}
        sys.stderr.write(json.dumps(_jsonable(payload), sort_keys=True) + '\n')


def build_parser():
    parser = argparse.ArgumentParser(description="Floquet spectral engine for indefinite periodic Sturm-Liouville problems")
    parser.add_argument('--config', default='config.json')
    parser.add_argument('--tol', type=float, default=None)
    parser.add_argument('--format', choices=('csv', 'json'), default=None)
    parser.add_argument('--output', default=None)
    parser.add_argument('--verbose', action='store_true')
    commands = parser.add_subparsers(dest='command', required=True)

    def command(name):
        sub = commands.add_parser(name)
        sub.add_argument('input', help="coefficient set (JSON)")
        return sub

    sub = command('scan')
    sub.add_argument('--re', type=lambda s: _pair(s, '--re'), required=True)
    sub.add_argument('--im', type=lambda s: _pair(s, '--im'), default=[0.0, 0.0])
    sub.add_argument('--n', type=int, default=50)

    sub = command('bands')
    sub.add_argument('--window', type=lambda s: _pair(s, '--window'), required=True)

    sub = command('curves')
    sub.add_argument('--box', type=lambda s: _pair(s, '--box'), required=True)

    sub = command('eigs')
    sub.add_argument('--t', type=float, required=True)
    sub.add_argument('--box', type=lambda s: _pair(s, '--box'), required=True)

    sub = command('classify')
    sub.add_argument('--window', type=lambda s: _pair(s, '--window'), required=True)
    sub.add_argument('--box', type=lambda s: _pair(s, '--box'), default=None)

    sub = command('resolve')
    sub.add_argument('--z', type=complex, required=True)
    sub.add_argument('--lambda', dest='lam', type=complex, required=True)
    sub.add_argument('--g', required=True)

    command('check')

    sub = command('trace')
    sub.add_argument('--lambda', dest='lam', type=complex, required=True)
    sub.add_argument('--n', type=int, default=201)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format='%(asctime)s - %(levelname)s - %(message)s',
        stream=sys.stderr,
    )
    try:
        runner = FloquetRunner(args)
    except ValueError as e:
        logging.error(f"Invalid configuration: {e}")
        FloquetRunner.diagnose(e)
        return EXIT_INVALID
    return runner.run()


if __name__ == "__main__":
    sys.exit(main())
