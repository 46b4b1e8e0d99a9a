"""Command-line harness: artifacts, determinism, manifests, exit codes."""

import csv
import hashlib
import json
import math
import textwrap

import numpy as np
import pytest

from dqdyn import cli
from conftest import gaussian_mag

CANONICAL_DOC = textwrap.dedent(
    """
    protocol:
      uniform: {eta: 0.5, delta_l: 120.0, count: 20}
    """
)


def write_cfg(tmp_path, text, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(textwrap.dedent(text))
    return str(path)


def run_cli(*argv) -> int:
    return cli.main(list(argv))


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


class TestSimulate:
    def test_canonical_defaults(self, tmp_path):
        cfg = write_cfg(tmp_path, CANONICAL_DOC)
        out = tmp_path / "out"
        assert run_cli("simulate", "--config", cfg, "--out-dir", str(out)) == 0
        header, rows = read_csv(out / "simulate.csv")
        assert header[:4] == ["step", "D", "dD", "N"]
        assert len(rows) == 21
        assert float(rows[0][1]) == 1.0
        n_col = [float(r[3]) for r in rows]
        assert all(b >= a for a, b in zip(n_col, n_col[1:]))

    def test_first_step_contraction_at_80(self, tmp_path):
        cfg = write_cfg(
            tmp_path,
            """
            protocol:
              uniform: {eta: 0.5, delta_l: 80.0, count: 20}
            """,
        )
        out = tmp_path / "out"
        assert run_cli("simulate", "--config", cfg, "--out-dir", str(out)) == 0
        _, rows = read_csv(out / "simulate.csv")
        assert abs(float(rows[1][1]) - gaussian_mag(80.0)) < 1e-6
        assert round(float(rows[1][1]), 3) == 0.277

    def test_spin_echo_rows(self, tmp_path):
        cfg = write_cfg(
            tmp_path,
            """
            protocol:
              uniform: {eta: 0.0, delta_l: 120.0, count: 4}
              pair: [D, A]
            """,
        )
        out = tmp_path / "out"
        assert run_cli("simulate", "--config", cfg, "--out-dir", str(out)) == 0
        _, rows = read_csv(out / "simulate.csv")
        for n in (0, 2, 4):
            assert abs(float(rows[n][1]) - 1.0) < 1e-10

    def test_backend_both_cross_validates(self, tmp_path):
        cfg = write_cfg(tmp_path, CANONICAL_DOC)
        out = tmp_path / "out"
        assert (
            run_cli("simulate", "--config", cfg, "--backend", "both", "--out-dir", str(out))
            == 0
        )
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["settings"]["backend_agreement"] < 1e-8

    def test_backend_disagreement_exits_three(self, tmp_path):
        # A clipped 2-sigma grid biases the quadrature average well past the
        # cross-validation tolerance.
        cfg = write_cfg(
            tmp_path,
            """
            protocol:
              uniform: {eta: 0.5, delta_l: 120.0, count: 20}
            run: {backend: both, span_sigmas: 2.0}
            """,
        )
        assert run_cli("simulate", "--config", cfg, "--out-dir", str(tmp_path / "o")) == 3

    def test_byte_determinism(self, tmp_path):
        cfg = write_cfg(tmp_path, CANONICAL_DOC)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert run_cli("simulate", "--config", cfg, "--out-dir", str(out1)) == 0
        assert run_cli("simulate", "--config", cfg, "--out-dir", str(out2)) == 0
        assert (out1 / "simulate.csv").read_bytes() == (out2 / "simulate.csv").read_bytes()

    def test_manifest_rerun_reproduces_digests(self, tmp_path):
        cfg = write_cfg(tmp_path, CANONICAL_DOC)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert run_cli("simulate", "--config", cfg, "--out-dir", str(out1)) == 0
        manifest = json.loads((out1 / "manifest.json").read_text())
        assert (
            run_cli(
                "simulate",
                "--config",
                str(out1 / "manifest.json"),
                "--out-dir",
                str(out2),
            )
            == 0
        )
        rerun = json.loads((out2 / "manifest.json").read_text())
        digest1 = {k: v for k, v in manifest["outputs"].items()}
        digest2 = {k: v for k, v in rerun["outputs"].items()}
        assert digest1 == digest2

    def test_manifest_references_real_digests(self, tmp_path):
        cfg = write_cfg(tmp_path, CANONICAL_DOC)
        out = tmp_path / "out"
        assert run_cli("simulate", "--config", cfg, "--out-dir", str(out)) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "simulate"
        assert "version" in manifest and "created_utc" in manifest
        for name, digest in manifest["outputs"].items():
            blob = (out / name).read_bytes()
            assert digest == "sha256:" + hashlib.sha256(blob).hexdigest()


class TestExitCodes:
    def test_unknown_key_is_config_error(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "run: {backent: lattice}")
        assert run_cli("simulate", "--config", cfg, "--out-dir", str(tmp_path / "o")) == 2
        assert "run.backent" in capsys.readouterr().err

    def test_missing_config_file(self, tmp_path):
        assert (
            run_cli(
                "simulate",
                "--config",
                str(tmp_path / "nope.yaml"),
                "--out-dir",
                str(tmp_path / "o"),
            )
            == 2
        )

    def test_missing_protocol_section(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "run: {backend: lattice}")
        assert run_cli("simulate", "--config", cfg, "--out-dir", str(tmp_path / "o")) == 2
        assert "protocol" in capsys.readouterr().err

    def test_even_node_override_rejected(self, tmp_path):
        cfg = write_cfg(tmp_path, CANONICAL_DOC)
        assert (
            run_cli(
                "simulate",
                "--config",
                cfg,
                "--nodes",
                "100",
                "--out-dir",
                str(tmp_path / "o"),
            )
            == 2
        )

    def test_nyquist_violation_is_backend_precondition(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, CANONICAL_DOC)
        code = run_cli(
            "simulate",
            "--config",
            cfg,
            "--backend",
            "quadrature",
            "--nodes",
            "101",
            "--out-dir",
            str(tmp_path / "o"),
        )
        assert code == 2
        assert "nodes" in capsys.readouterr().err

    def test_incommensurate_lattice_request(self, tmp_path, capsys):
        cfg = write_cfg(
            tmp_path,
            f"""
            protocol:
              steps:
                - {{eta: 0.5, delta_l: 40.0}}
                - {{eta: 0.5, delta_l: {40.0 * math.sqrt(2.0)!r}}}
            """,
        )
        code = run_cli("simulate", "--config", cfg, "--out-dir", str(tmp_path / "o"))
        assert code == 2
        assert "quadrature" in capsys.readouterr().err


class TestFigures:
    def test_distance_data_sets(self, tmp_path):
        out = tmp_path / "out"
        assert run_cli("figures", "2", "--out-dir", str(out)) == 0
        header, rows = read_csv(out / "figure2.csv")
        assert header == ["delta_l", "step", "D"]
        assert len(rows) == 2 * 21
        values = sorted({float(r[0]) for r in rows})
        assert values == [80.0, 120.0]
        assert all(0.0 <= float(r[2]) <= 1.0 for r in rows)

    def test_eta_family_data_sets(self, tmp_path):
        out = tmp_path / "out"
        assert run_cli("figures", "4", "--out-dir", str(out)) == 0
        header, rows = read_csv(out / "figure4.csv")
        assert header == ["eta", "step", "D"]
        assert len(rows) == 5 * 21
        assert sorted({float(r[0]) for r in rows}) == [
            0.1654,
            0.3127,
            0.5,
            0.6545,
            0.9045,
        ]

    def test_memory_series_non_decreasing(self, tmp_path):
        for fig in ("3", "5"):
            out = tmp_path / ("out" + fig)
            assert run_cli("figures", fig, "--out-dir", str(out)) == 0
            _, rows = read_csv(out / f"figure{fig}.csv")
            by_series = {}
            for key, step, val in rows:
                by_series.setdefault(key, []).append((int(step), float(val)))
            for series in by_series.values():
                series.sort()
                vals = [v for _, v in series]
                assert all(b >= a - 1e-15 for a, b in zip(vals, vals[1:]))
                assert vals[-1] > 0.01

    def test_optional_plot_artifact(self, tmp_path):
        pytest.importorskip("matplotlib")
        out = tmp_path / "out"
        assert run_cli("figures", "3", "--plot", "--out-dir", str(out)) == 0
        svg = (out / "figure3.svg").read_text()
        assert svg.lstrip().startswith("<?xml")

    def test_unknown_figure_id_rejected(self):
        with pytest.raises(SystemExit):
            cli.build_parser().parse_args(["figures", "7"])


class TestSweep:
    SWEEP_DOC = """
    protocol:
      uniform: {eta: 0.5, delta_l: 120.0, count: 4}
      pair: [D, A]
    sweep:
      eta: {values: [0.0, 1.0]}
      delta_l: {values: [80.0, 120.0]}
      count: 4
    """

    def test_endpoint_rows(self, tmp_path):
        cfg = write_cfg(tmp_path, self.SWEEP_DOC)
        out = tmp_path / "out"
        assert run_cli("sweep", "--config", cfg, "--out-dir", str(out)) == 0
        header, rows = read_csv(out / "sweep.csv")
        assert header[:4] == ["eta", "delta_l", "steps", "N"]
        assert len(rows) == 4
        for row in rows:
            eta, nm = float(row[0]), float(row[3])
            if eta == 1.0:
                assert nm == 0.0
            else:
                assert nm > 0.0

    def test_single_point_sweep_matches_simulate(self, tmp_path):
        doc = """
        protocol:
          uniform: {eta: 0.3127, delta_l: 120.0, count: 20}
          pair: [D, A]
        sweep:
          eta: {values: [0.3127]}
          delta_l: {values: [120.0]}
          count: 20
        """
        cfg = write_cfg(tmp_path, doc)
        out = tmp_path / "out"
        assert run_cli("sweep", "--config", cfg, "--out-dir", str(out)) == 0
        assert run_cli("simulate", "--config", cfg, "--out-dir", str(out)) == 0
        _, sweep_rows = read_csv(out / "sweep.csv")
        _, sim_rows = read_csv(out / "simulate.csv")
        assert sweep_rows[0][3] == sim_rows[-1][3]  # N(n_final), exact strings
        assert sweep_rows[0][5] == sim_rows[-1][1]  # final D

    def test_worker_pool_output_identical(self, tmp_path):
        cfg = write_cfg(tmp_path, self.SWEEP_DOC)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert run_cli("sweep", "--config", cfg, "--out-dir", str(out1)) == 0
        assert (
            run_cli("sweep", "--config", cfg, "--workers", "2", "--out-dir", str(out2))
            == 0
        )
        assert (out1 / "sweep.csv").read_bytes() == (out2 / "sweep.csv").read_bytes()

    def test_grid_cap_enforced(self, tmp_path):
        cfg = write_cfg(
            tmp_path,
            """
            sweep:
              eta: {start: 0.0, stop: 1.0, count: 5}
              delta_l: {values: [80.0, 120.0]}
              count: 4
              max_points: 9
            """,
        )
        assert run_cli("sweep", "--config", cfg, "--out-dir", str(tmp_path / "o")) == 2

    def test_sweep_requires_section(self, tmp_path):
        cfg = write_cfg(tmp_path, CANONICAL_DOC)
        assert run_cli("sweep", "--config", cfg, "--out-dir", str(tmp_path / "o")) == 2


class TestMaps:
    def test_divisibility_report(self, tmp_path):
        cfg = write_cfg(tmp_path, CANONICAL_DOC)
        out = tmp_path / "out"
        assert run_cli("maps", "--config", cfg, "--out-dir", str(out)) == 0
        header, rows = read_csv(out / "maps.csv")
        assert header[0] == "step" and header[1] == "label"
        assert [int(r[0]) for r in rows] == list(range(1, 21))
        labels = {r[1] for r in rows}
        assert labels <= {"CP_DIVISIBLE", "P_ONLY", "NON_P", "SINGULAR"}
        assert "NON_P" in labels


class TestOptimize:
    OPT_DOC = """
    optimize: {budget: 30, count: 2, delta_l: 120.0}
    """

    def test_schedule_and_log(self, tmp_path):
        cfg = write_cfg(tmp_path, self.OPT_DOC)
        out = tmp_path / "out"
        assert run_cli("optimize", "--config", cfg, "--out-dir", str(out)) == 0
        _, schedule = read_csv(out / "schedule.csv")
        assert len(schedule) == 2
        _, evals = read_csv(out / "evaluations.csv")
        assert 1 <= len(evals) <= 30
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["settings"]["best_N"] > 0.0

    def test_budget_flag_overrides(self, tmp_path):
        cfg = write_cfg(tmp_path, self.OPT_DOC)
        out = tmp_path / "out"
        assert (
            run_cli("optimize", "--config", cfg, "--budget", "5", "--out-dir", str(out))
            == 0
        )
        _, evals = read_csv(out / "evaluations.csv")
        assert len(evals) <= 5

    def test_deterministic_given_seed(self, tmp_path):
        cfg = write_cfg(tmp_path, self.OPT_DOC)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert run_cli("optimize", "--config", cfg, "--seed", "4", "--out-dir", str(out1)) == 0
        assert run_cli("optimize", "--config", cfg, "--seed", "4", "--out-dir", str(out2)) == 0
        for name in ("schedule.csv", "evaluations.csv"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_beats_uniform_reference(self, tmp_path, model):
        from dqdyn.measures import pair_memory
        from dqdyn.protocol import Protocol

        cfg = write_cfg(tmp_path, self.OPT_DOC)
        out = tmp_path / "out"
        assert run_cli("optimize", "--config", cfg, "--out-dir", str(out)) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        uniform = pair_memory(Protocol.uniform(0.5, 120.0, 2), model).total
        assert manifest["settings"]["best_N"] >= uniform - 1e-12
