from __future__ import annotations

import io
import json
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from core.errors import EXIT_ENVELOPE_VIOLATION, CanonicalWeylError
from mainapps.sweeps.config import load_config, parse_angles_flag, parse_config, parse_grid_flag
from mainapps.sweeps.serializers import COMMANDS, FORMATS
from mainapps.sweeps.services import run_command, write_result


class Command(BaseCommand):
    help = 'Weyl coefficient estimates, certified values and spectral checks for canonical systems'

    def add_arguments(self, parser):
        parser.add_argument('command', choices=COMMANDS, help='Operation to run')
        parser.add_argument('--config', type=str, help='YAML run configuration')
        parser.add_argument('--out', type=str, help='Write records here instead of stdout')
        parser.add_argument('--q', type=float, help='Estimator parameter in (0, 1 - 1/sqrt(2))')
        parser.add_argument('--eps', type=float, help='Target certificate radius')
        parser.add_argument('--grid', type=str, help='Radii as MIN:MAX:N, geometric')
        parser.add_argument('--angles', type=str, help='Comma separated angles')
        parser.add_argument('--format', choices=FORMATS, help='Output format')

    def _overrides(self, options) -> dict:
        overrides = {
            'command': options['command'],
            'out': options.get('out'),
            'q': options.get('q'),
            'eps': options.get('eps'),
            'format': options.get('format'),
        }
        if options.get('grid'):
            overrides['grid'] = parse_grid_flag(options['grid'])
        if options.get('angles'):
            overrides['angles'] = parse_angles_flag(options['angles'])
        return overrides

    def handle(self, *args, **options):
        try:
            overrides = self._overrides(options)
            if options.get('config'):
                cfg = load_config(options['config'], overrides)
            else:
                cfg = parse_config('', overrides)
            result = run_command(cfg)
        except CanonicalWeylError as exc:
            raise CommandError(str(exc), returncode=exc.exit_code) from exc

        buffer = io.StringIO()
        write_result(result, buffer, cfg.format)
        if cfg.out:
            Path(cfg.out).write_text(buffer.getvalue(), encoding='utf-8')
            self.stderr.write(f"Wrote {len(result.records)} records to {cfg.out}")
        else:
            self.stdout.write(buffer.getvalue(), ending='')

        if result.summary is not None and cfg.format == 'csv':
            self.stderr.write(json.dumps(result.summary, default=str))
        if not result.ok:
            raise CommandError(
                f"{result.violations} checks failed in '{cfg.command}'.",
                returncode=EXIT_ENVELOPE_VIOLATION,
            )
        self.stderr.write(self.style.SUCCESS(f"'{cfg.command}' finished: {len(result.records)} records"))
