import csv
import io
import json
import math
import tempfile
from pathlib import Path
from unittest import mock

from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from core.errors import EXIT_CONFIGURATION, EXIT_ENVELOPE_VIOLATION, EXIT_NUMERIC, ParseError, SchemaError, SlowShrink
from mainapps.hamiltonians.corpus import FIXTURES

from .config import parse_angles_flag, parse_config, parse_grid_flag, serialize
from .services import CSV_HEADER, ServiceResult, run_sweep, summarize, write_csv


IDENTITY_SWEEP = """
command: sweep
hamiltonian:
  kind: corpus
  name: identity
grid:
  r_min: 1
  r_max: 100
  points: 3
"""


class ParseConfigTests(SimpleTestCase):
    def test_defaults_come_from_settings(self):
        cfg = parse_config(IDENTITY_SWEEP)

        self.assertEqual(cfg.q, 0.2)
        self.assertEqual(cfg.eps, 1e-8)
        self.assertEqual(cfg.format, "csv")
        self.assertEqual(len(cfg.angles), 3)
        self.assertEqual(cfg.hamiltonian.name, "identity")

    def test_overrides_replace_file_values(self):
        cfg = parse_config(IDENTITY_SWEEP, {"q": 0.1, "format": "json", "eps": None})

        self.assertEqual(cfg.q, 0.1)
        self.assertEqual(cfg.format, "json")
        self.assertEqual(cfg.eps, 1e-8)

    def test_q_outside_the_admissible_range(self):
        with self.assertRaises(SchemaError) as ctx:
            parse_config(IDENTITY_SWEEP + "q: 0.5\n")

        self.assertEqual(ctx.exception.key, "q")
        self.assertEqual(ctx.exception.exit_code, EXIT_CONFIGURATION)

    def test_unknown_key_is_named(self):
        with self.assertRaises(SchemaError) as ctx:
            parse_config(IDENTITY_SWEEP + "colour: red\n")

        self.assertEqual(ctx.exception.key, "colour")

    def test_nested_errors_carry_a_dotted_key(self):
        with self.assertRaises(SchemaError) as ctx:
            parse_config("command: sweep\nhamiltonian:\n  kind: corpus\n  name: missing\n")

        self.assertEqual(ctx.exception.key, "hamiltonian.name")

    def test_command_without_its_subject(self):
        with self.assertRaises(SchemaError) as ctx:
            parse_config("command: sweep\n")

        self.assertEqual(ctx.exception.key, "hamiltonian")

    def test_malformed_yaml_reports_the_line(self):
        with self.assertRaises(ParseError) as ctx:
            parse_config("command: sweep\nfoo: bar: baz\n")

        self.assertEqual(ctx.exception.line, 2)
        self.assertIsNotNone(ctx.exception.column)

    def test_non_mapping_document(self):
        with self.assertRaises(SchemaError):
            parse_config("- sweep\n")

    def test_normalized_form_parses_back(self):
        cfg = parse_config(IDENTITY_SWEEP)

        again = parse_config(serialize(cfg))

        self.assertEqual(again.as_dict(), cfg.as_dict())

    def test_string_subject_is_built(self):
        cfg = parse_config("command: string\nstring:\n  mass: [[1.0, 1.0]]\n")

        self.assertEqual(cfg.string.length, math.inf)
        self.assertEqual(cfg.string.mass(2.0), 2.0)

    def test_sl_angles_may_pass_pi(self):
        cfg = parse_config("command: sl\nsl:\n  kind: free\nangles: [4.0]\n")

        self.assertEqual(cfg.angles, (4.0,))

    def test_grid_and_angle_flags(self):
        self.assertEqual(parse_grid_flag("1:1e4:5"), {"r_min": 1.0, "r_max": 1e4, "points": 5})
        self.assertEqual(parse_angles_flag("0.5, 1.5"), [0.5, 1.5])
        with self.assertRaises(SchemaError):
            parse_grid_flag("1:10")


class SweepServiceTests(SimpleTestCase):
    def test_identity_sweep_keeps_the_envelope(self):
        result = run_sweep(parse_config(IDENTITY_SWEEP))

        self.assertEqual(len(result.rows), 9)
        self.assertTrue(result.summary.ok)
        self.assertGreater(result.summary.min_slack, 0.0)
        for row in result.rows:
            self.assertLessEqual(abs(row.abs_q - 1.0), row.eps_cert + 1e-12)

    def test_rows_are_ordered_by_radius_then_angle(self):
        rows = run_sweep(parse_config(IDENTITY_SWEEP)).rows

        self.assertEqual([row.r for row in rows], sorted(row.r for row in rows))
        self.assertEqual([row.theta for row in rows[:3]], [math.pi / 4, math.pi / 2, 3 * math.pi / 4])

    def test_identity_slopes(self):
        summary = run_sweep(parse_config(IDENTITY_SWEEP)).summary

        for slopes in summary.slopes.values():
            self.assertAlmostEqual(slopes["A"], 0.0, delta=1e-6)
            self.assertAlmostEqual(slopes["abs_q"], 0.0, delta=1e-6)

    def test_empty_summary(self):
        summary = summarize(())

        self.assertEqual(summary.rows, 0)
        self.assertTrue(math.isnan(summary.min_slack))

    def test_csv_header_is_fixed(self):
        result = ServiceResult("sweep", (), header=CSV_HEADER)
        stream = io.StringIO()

        write_csv(result, stream)

        self.assertEqual(stream.getvalue(), "r,theta,t_crit,A,L,lower_abs,upper_abs,abs_q,re_q,im_q,eps_cert,envelope_ok\n")


class CanonicalCommandTests(SimpleTestCase):
    def run_command(self, *args, **options):
        stdout, stderr = io.StringIO(), io.StringIO()
        call_command("canonical", *args, stdout=stdout, stderr=stderr, **options)
        return stdout.getvalue(), stderr.getvalue()

    def write_config(self, text: str) -> str:
        directory = tempfile.mkdtemp()
        path = Path(directory) / "run.yaml"
        path.write_text(text, encoding="utf-8")
        return str(path)

    def test_corpus_lists_every_fixture(self):
        stdout, _ = self.run_command("corpus")
        lines = stdout.strip().splitlines()

        self.assertEqual(lines[0], "name,description,envelope_suite,limit_point,A,L")
        self.assertEqual(len(lines), len(FIXTURES) + 1)
        rows = {row["name"]: row for row in csv.DictReader(io.StringIO(stdout))}
        self.assertEqual(rows["identity"]["limit_point"], "true")
        self.assertAlmostEqual(float(rows["identity"]["A"]), 1.0, places=12)
        self.assertEqual(rows["split_prefix"]["A"], "")

    def test_sweep_writes_the_fixed_header_and_passing_rows(self):
        stdout, stderr = self.run_command("sweep", config=self.write_config(IDENTITY_SWEEP))
        lines = stdout.strip().splitlines()

        self.assertEqual(lines[0], ",".join(CSV_HEADER))
        self.assertEqual(len(lines), 10)
        self.assertTrue(all(line.endswith(",true") for line in lines[1:]))
        self.assertIn('"violations": 0', stderr)

    def test_flags_override_the_file(self):
        stdout, _ = self.run_command(
            "estimate", config=self.write_config(IDENTITY_SWEEP.replace("sweep", "estimate")), grid="1:10:2", format="json"
        )
        document = json.loads(stdout)

        self.assertEqual(len(document["records"]), 2)
        self.assertEqual(document["violations"], 0)

    def test_out_writes_a_file(self):
        target = Path(tempfile.mkdtemp()) / "rows.csv"

        self.run_command("corpus", out=str(target))

        self.assertTrue(target.read_text(encoding="utf-8").startswith("name,"))

    def test_missing_subject_exits_with_the_configuration_code(self):
        with self.assertRaises(CommandError) as ctx:
            self.run_command("sweep")

        self.assertEqual(ctx.exception.returncode, EXIT_CONFIGURATION)

    def test_bad_q_exits_with_the_configuration_code(self):
        with self.assertRaises(CommandError) as ctx:
            self.run_command("sweep", config=self.write_config(IDENTITY_SWEEP), q=0.5)

        self.assertEqual(ctx.exception.returncode, EXIT_CONFIGURATION)
        self.assertIn("q", str(ctx.exception))

    def test_missing_file_exits_with_the_configuration_code(self):
        with self.assertRaises(CommandError) as ctx:
            self.run_command("sweep", config="/nonexistent/run.yaml")

        self.assertEqual(ctx.exception.returncode, EXIT_CONFIGURATION)

    def test_failed_checks_exit_with_the_violation_code(self):
        failing = ServiceResult("corpus", ({"name": "x"},), violations=1)
        with mock.patch("mainapps.sweeps.management.commands.canonical.run_command", return_value=failing):
            with self.assertRaises(CommandError) as ctx:
                self.run_command("corpus")

        self.assertEqual(ctx.exception.returncode, EXIT_ENVELOPE_VIOLATION)

    def test_numerical_failure_exits_with_the_numeric_code(self):
        error = SlowShrink(message="discs did not shrink", achieved_radius=1e-3)
        with mock.patch("mainapps.sweeps.management.commands.canonical.run_command", side_effect=error):
            with self.assertRaises(CommandError) as ctx:
                self.run_command("corpus")

        self.assertEqual(ctx.exception.returncode, EXIT_NUMERIC)
