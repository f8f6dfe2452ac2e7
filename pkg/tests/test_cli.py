import importlib.resources as resources
import json
import os

import numpy as np
import pytest

from mvmr import cli, graph

SCENARIOS = resources.files("mvmr").joinpath("data", "scenarios")
FIXTURES = resources.files("mvmr").joinpath("data", "fixtures")


def write_scenario(tmp_path, name="fig2_corr_desk.json", **overrides):
    payload = json.loads(SCENARIOS.joinpath(name).read_text(encoding="utf-8"))
    payload.update(overrides)
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


def standardized_diagram_text(include_cross=True):
    """Unit-variance two-exposure diagram rendered in the text format."""
    edges = {
        ("E1", "X1"): 0.3,
        ("E2", "X2"): 0.25,
        ("X1", "Y"): 0.2,
        ("X2", "Y"): 0.6,
    }
    if include_cross:
        edges[("E1", "X2")] = 0.1
        edges[("E2", "X1")] = 0.15
    bicov = {("E1", "E2"): 0.6}
    diagram = graph.CausalDiagram(
        ["E1", "E2", "X1", "X2", "Y"], list(edges), list(bicov)
    )
    sem = graph.calibrate_unit_variances(diagram, edges, bicov)
    lines = [f"edge {s} -> {t} {float(edges[(s, t)])!r}" for s, t in edges]
    lines += [f"bicov {a} <-> {b} {float(v)!r}" for (a, b), v in bicov.items()]
    lines += [
        f"var {n} {float(sem.error_covariance(diagram, n, n))!r}" for n in diagram.nodes
    ]
    return "\n".join(lines)


class TestSimulateCommand:
    def test_byte_identical_reruns(self, tmp_path):
        scenario = write_scenario(tmp_path)
        for out in ("a", "b"):
            code = cli.main(
                [
                    "simulate",
                    "--scenario",
                    scenario,
                    "--seed",
                    "7",
                    "--replicates",
                    "25",
                    "--out",
                    str(tmp_path / out),
                ]
            )
            assert code == 0
        for name in ("replicates.csv", "summary.json"):
            assert (tmp_path / "a" / name).read_bytes() == (
                tmp_path / "b" / name
            ).read_bytes()

    def test_thread_count_does_not_change_output(self, tmp_path):
        scenario = write_scenario(tmp_path)
        for out, threads in (("t1", "1"), ("t4", "4")):
            cli.main(
                [
                    "simulate",
                    "--scenario",
                    scenario,
                    "--seed",
                    "11",
                    "--replicates",
                    "16",
                    "--threads",
                    threads,
                    "--out",
                    str(tmp_path / out),
                ]
            )
        assert (tmp_path / "t1" / "replicates.csv").read_bytes() == (
            tmp_path / "t4" / "replicates.csv"
        ).read_bytes()

    def test_missing_seed_usage_error(self, tmp_path, capsys):
        scenario = write_scenario(tmp_path)
        code = cli.main(["simulate", "--scenario", scenario, "--out", str(tmp_path / "x")])
        assert code == 2
        assert "seed" in capsys.readouterr().err

    def test_invalid_scenario_usage_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"kind": "replicates", "bogus": 1}))
        code = cli.main(["simulate", "--scenario", str(bad), "--seed", "1"])
        assert code == 2

    def test_fig2_layout_columns(self, tmp_path):
        scenario = write_scenario(tmp_path, name="fig2_corr.json")
        code = cli.main(
            [
                "simulate",
                "--scenario",
                scenario,
                "--seed",
                "3",
                "--replicates",
                "4",
                "--out",
                str(tmp_path / "fig2"),
            ]
        )
        assert code == 0
        header = (tmp_path / "fig2" / "replicates.csv").read_text().splitlines()[0]
        for column in ("correlation", "n_samples", "estimate", "exposure"):
            assert column in header.split(",")


class TestEstimateCommand:
    def test_identity_toy(self, tmp_path, capsys):
        stats = tmp_path / "stats.json"
        stats.write_text(
            json.dumps(
                {
                    "sigma_EX": [[1.0, 0.0], [0.0, 1.0]],
                    "sigma_EY": [0.2, 0.6],
                    "sigma_EE": [[1.0, 0.0], [0.0, 1.0]],
                    "n_outcome": 10000,
                }
            )
        )
        code = cli.main(["estimate", "--stats", str(stats), "--estimators", "ls"])
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["estimates"]["ls"]["effects"] == pytest.approx([0.2, 0.6])

    def test_diagram_population_exact_recovery(self, tmp_path, capsys):
        text = standardized_diagram_text()
        path = tmp_path / "diagram.txt"
        path.write_text(text)
        code = cli.main(
            [
                "estimate",
                "--diagram",
                str(path),
                "--instruments",
                "E1,E2",
                "--exposures",
                "X1,X2",
                "--outcome",
                "Y",
                "--estimators",
                "ls",
            ]
        )
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["instrumental_set"]["satisfied"]
        assert payload["estimates"]["ls"]["effects"] == pytest.approx(
            [0.2, 0.6], abs=1e-9
        )

    def test_non_identifiable_diagram_exit_3(self, tmp_path, capsys):
        text = "\n".join(
            [
                "edge E1 -> X1 0.3",
                "edge E1 -> X2 0.25",
                "edge X1 -> Y 0.2",
                "edge X2 -> Y 0.6",
                "bicov E1 <-> E2 0.6",
            ]
        )
        path = tmp_path / "diagram.txt"
        path.write_text(text)
        code = cli.main(
            [
                "estimate",
                "--diagram",
                str(path),
                "--instruments",
                "E1,E2",
                "--exposures",
                "X1,X2",
                "--outcome",
                "Y",
                "--estimators",
                "ls",
            ]
        )
        assert code == 3
        assert "non-identifiable" in capsys.readouterr().err

    def test_requires_input_source(self, capsys):
        assert cli.main(["estimate"]) == 2


class TestLociCommand:
    def test_fixture_trio(self, tmp_path, capsys):
        code = cli.main(
            [
                "loci",
                "--eqtl",
                str(FIXTURES / "eqtl.tsv"),
                "--gwas",
                str(FIXTURES / "gwas.tsv"),
                "--ld",
                str(FIXTURES / "ld.txt"),
                "--out",
                str(tmp_path / "out"),
            ]
        )
        assert code == 0
        assert "analysed 3 loci" in capsys.readouterr().out
        assert (tmp_path / "out" / "causal_gene_calls.csv").exists()

    def test_malformed_tsv_exit_2(self, tmp_path, capsys):
        bad = tmp_path / "eqtl.tsv"
        bad.write_text(
            "snp\tchrom\tpos\tgene\ttissue\tbeta\tse\tmaf\tfdr\nrs1\toops\n"
        )
        code = cli.main(
            [
                "loci",
                "--eqtl",
                str(bad),
                "--gwas",
                str(FIXTURES / "gwas.tsv"),
                "--ld",
                str(FIXTURES / "ld.txt"),
                "--out",
                str(tmp_path / "out"),
            ]
        )
        assert code == 2
        assert ":2" in capsys.readouterr().err

    def test_no_significant_gwas_empty_report(self, tmp_path, capsys):
        eqtl = tmp_path / "eqtl.tsv"
        eqtl.write_text(
            "snp\tchrom\tpos\tgene\ttissue\tbeta\tse\tmaf\tfdr\n"
            "rs1\t1\t100\tGENE1\tLIV\t0.4\t0.01\t0.3\t0.001\n"
        )
        gwas = tmp_path / "gwas.tsv"
        gwas.write_text(
            "snp\tchrom\tpos\tbeta\tse\tpval\tn\nrs1\t1\t100\t0.01\t0.02\t0.5\t1000\n"
        )
        ld = tmp_path / "ld.txt"
        ld.write_text("rs1\n1.0\n")
        code = cli.main(
            [
                "loci",
                "--eqtl",
                str(eqtl),
                "--gwas",
                str(gwas),
                "--ld",
                str(ld),
                "--out",
                str(tmp_path / "out"),
            ]
        )
        assert code == 0
        assert "analysed 0 loci" in capsys.readouterr().out


class TestFiguresCommand:
    def test_single_scenario_quick_run(self, tmp_path):
        code = cli.main(
            [
                "figures",
                "--only",
                "s8_pca",
                "--seed",
                "5",
                "--replicates",
                "20",
                "--out",
                str(tmp_path / "figs"),
            ]
        )
        assert code == 0
        assert (tmp_path / "figs" / "s8_pca" / "pc1_explained_variance.csv").exists()

    def test_unknown_scenario_rejected(self, tmp_path, capsys):
        code = cli.main(
            ["figures", "--only", "nope", "--seed", "1", "--out", str(tmp_path / "f")]
        )
        assert code == 2

    def test_output_dir_env_default(self, tmp_path, monkeypatch):
        monkeypatch.setenv("MVMR_OUTPUT_DIR", str(tmp_path / "envout"))
        monkeypatch.chdir(tmp_path)
        code = cli.main(
            ["figures", "--only", "s8_pca", "--seed", "2", "--replicates", "5"]
        )
        assert code == 0
        assert (tmp_path / "envout" / "s8_pca" / "summary.json").exists()


class TestHelp:
    def test_subcommand_help_lists_config_keys(self, capsys):
        with pytest.raises(SystemExit) as info:
            cli.main(["loci", "--help"])
        assert info.value.code == 0
        text = capsys.readouterr().out
        for flag in ("--prune-r2", "--causal-threshold", "--bonferroni", "--gwas-p"):
            assert flag in text
