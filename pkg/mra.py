#!/usr/bin/env python3
"""
MRA - multi-reference alignment toolkit
Unified command-line interface

Usage:
    python mra.py simulate --k 4 --sigma 1 --n 1000 --out batch.json
    python mra.py estimate --method mom-fm --in batch.json [--truth signal.json]
    python mra.py sweep --config example/high_noise_sigma6.yaml --out-dir runs/high
    python mra.py fit --report runs/high --axis sigma
"""
import importlib
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.resolve()))

COMMANDS = {
    'simulate': ('mra_model.mra_model', 'draw a signal and a noisy rotated sample batch'),
    'estimate': ('mra_mom.mra_mom', 'estimate a signal from a batch (mom-fm, mom-linf, mom-oracle, mle)'),
    'sweep': ('mra_sweep.mra_sweep', 'run a Monte Carlo risk sweep'),
    'fit': ('mra_sweep.fit', 'fit a scaling exponent to sweep results'),
}


def usage() -> str:
    lines = ['Usage: python mra.py <command> [options]', '', 'Commands:']
    for name, (_, help_text) in COMMANDS.items():
        lines.append(f'  {name:<10}{help_text}')
    lines.append('')
    lines.append('Run `python mra.py <command> --help` for command options.')
    return '\n'.join(lines)


def run_command(name, args):
    if name not in COMMANDS:
        print(f'[MRA] Unknown command: {name}', file=sys.stderr)
        print(usage(), file=sys.stderr)
        sys.exit(1)
    module = importlib.import_module(COMMANDS[name][0])
    module.main(args)


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv or argv[0] in ('-h', '--help'):
        print(usage())
        sys.exit(0)
    run_command(argv[0], argv[1:])


if __name__ == '__main__':
    main()
