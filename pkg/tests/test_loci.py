import importlib.resources as resources
import json
import os

import numpy as np
import pytest

from mvmr import loci
from mvmr.errors import SummaryFormatError

FIXTURES = resources.files("mvmr").joinpath("data", "fixtures")


@pytest.fixture(scope="module")
def fixture_paths():
    return (
        str(FIXTURES / "eqtl.tsv"),
        str(FIXTURES / "gwas.tsv"),
        str(FIXTURES / "ld.txt"),
    )


@pytest.fixture(scope="module")
def loaded(fixture_paths):
    return loci.load_summaries(*fixture_paths)


@pytest.fixture(scope="module")
def built(loaded):
    eqtls, gwas, ld, _ = loaded
    return loci.build_loci(eqtls, gwas, ld)


class TestLoadSummaries:
    def test_fixture_counts(self, loaded):
        eqtls, gwas, ld, warnings = loaded
        assert len(eqtls) == 60
        assert len(gwas) == 30
        assert len(ld.snps) == 30
        assert warnings == []

    def test_empty_eqtl_warns(self, tmp_path, fixture_paths):
        empty = tmp_path / "empty.tsv"
        empty.write_text("snp\tchrom\tpos\tgene\ttissue\tbeta\tse\tmaf\tfdr\n")
        _, gwas_path, ld_path = fixture_paths
        eqtls, _, _, warnings = loci.load_summaries(str(empty), gwas_path, ld_path)
        assert eqtls == []
        assert any("empty" in w for w in warnings)

    def test_malformed_row_has_line_number(self, tmp_path, fixture_paths):
        bad = tmp_path / "bad.tsv"
        bad.write_text(
            "snp\tchrom\tpos\tgene\ttissue\tbeta\tse\tmaf\tfdr\n"
            "rs1\t1\t100\tG\tT\t0.2\t0.01\t0.3\t0.001\n"
            "rs2\t1\tnot_a_number\tG\tT\t0.2\t0.01\t0.3\t0.001\n"
        )
        _, gwas_path, ld_path = fixture_paths
        with pytest.raises(SummaryFormatError, match=":3"):
            loci.load_summaries(str(bad), gwas_path, ld_path)

    def test_duplicate_triplet_rejected(self, tmp_path, fixture_paths):
        dup = tmp_path / "dup.tsv"
        dup.write_text(
            "snp\tchrom\tpos\tgene\ttissue\tbeta\tse\tmaf\tfdr\n"
            + "rs1\t1\t100\tG\tT\t0.2\t0.01\t0.3\t0.001\n" * 2
        )
        _, gwas_path, ld_path = fixture_paths
        with pytest.raises(SummaryFormatError, match="duplicate"):
            loci.load_summaries(str(dup), gwas_path, ld_path)

    def test_asymmetric_ld_rejected(self, tmp_path, fixture_paths):
        bad = tmp_path / "ld.txt"
        bad.write_text("rs1 rs2\n1.0 0.5\n0.4 1.0\n")
        eqtl_path, gwas_path, _ = fixture_paths
        with pytest.raises(SummaryFormatError, match="symmetric"):
            loci.load_summaries(eqtl_path, gwas_path, str(bad))

    def test_non_square_ld_rejected(self, tmp_path, fixture_paths):
        bad = tmp_path / "ld.txt"
        bad.write_text("rs1 rs2\n1.0 0.5\n")
        eqtl_path, gwas_path, _ = fixture_paths
        with pytest.raises(SummaryFormatError, match="square"):
            loci.load_summaries(eqtl_path, gwas_path, str(bad))

    def test_missing_ld_snp_warns(self, tmp_path, fixture_paths):
        eqtl = tmp_path / "eqtl.tsv"
        eqtl.write_text(
            "snp\tchrom\tpos\tgene\ttissue\tbeta\tse\tmaf\tfdr\n"
            "rs_unknown\t1\t100\tG\tT\t0.2\t0.01\t0.3\t0.001\n"
        )
        _, gwas_path, ld_path = fixture_paths
        _, _, _, warnings = loci.load_summaries(str(eqtl), gwas_path, ld_path)
        assert any("missing from LD" in w for w in warnings)


class TestBuildLoci:
    def test_three_disjoint_loci(self, built):
        assert [loc.chrom for loc in built] == ["15", "19", "6"]

    def test_chr6_geometry(self, built, loaded):
        eqtls, _, ld, _ = loaded
        locus = [l for l in built if l.chrom == "6"][0]
        assert len(locus.member_snps) == 12
        reasons = sorted(p[1] for p in locus.pruned)
        assert reasons == ["near_duplicate", "perfect_ld_with_lead", "perfect_ld_with_lead"]
        sub = ld.submatrix(locus.member_snps)
        r2 = sub[np.triu_indices_from(sub, k=1)] ** 2
        assert r2.min() == pytest.approx(0.17, abs=0.005)
        assert r2.max() == pytest.approx(0.86, abs=0.005)
        assert locus.genes_by_tissue["MAM"] == (
            "GFOD1",
            "PHACTR1",
            "RP1_257A7_4",
            "RP1_257A7_5",
            "TBC1D7",
        )
        assert loci.verify_closure(locus, eqtls)

    def test_lead_is_most_significant(self, built, loaded):
        _, gwas, _, _ = loaded
        for locus in built:
            member_ps = [gwas[s].pval for s in locus.collected_snps]
            assert gwas[locus.lead_snp].pval == min(member_ps)

    def test_single_snp_singleton_locus(self, tmp_path):
        eqtl = tmp_path / "eqtl.tsv"
        eqtl.write_text(
            "snp\tchrom\tpos\tgene\ttissue\tbeta\tse\tmaf\tfdr\n"
            "rs1\t1\t100\tGENE1\tLIV\t0.4\t0.01\t0.3\t0.001\n"
        )
        gwas = tmp_path / "gwas.tsv"
        gwas.write_text(
            "snp\tchrom\tpos\tbeta\tse\tpval\tn\n"
            "rs1\t1\t100\t0.08\t0.004\t1e-12\t10000\n"
        )
        ld = tmp_path / "ld.txt"
        ld.write_text("rs1\n1.0\n")
        records, gwas_map, ld_data, _ = loci.load_summaries(str(eqtl), str(gwas), str(ld))
        built = loci.build_loci(records, gwas_map, ld_data)
        assert len(built) == 1
        assert built[0].member_snps == ("rs1",)
        assert built[0].genes_by_tissue == {"LIV": ("GENE1",)}

    def test_radius_separates_same_chromosome(self, tmp_path):
        eqtl_rows = [
            "rs1\t1\t1000000\tGENE1\tLIV\t0.4\t0.01\t0.3\t0.001",
            "rs2\t1\t2000000\tGENE2\tLIV\t0.4\t0.01\t0.3\t0.001",
        ]
        (tmp_path / "eqtl.tsv").write_text(
            "snp\tchrom\tpos\tgene\ttissue\tbeta\tse\tmaf\tfdr\n"
            + "\n".join(eqtl_rows)
            + "\n"
        )
        (tmp_path / "gwas.tsv").write_text(
            "snp\tchrom\tpos\tbeta\tse\tpval\tn\n"
            "rs1\t1\t1000000\t0.08\t0.004\t1e-12\t10000\n"
            "rs2\t1\t2000000\t0.07\t0.004\t2e-12\t10000\n"
        )
        (tmp_path / "ld.txt").write_text("rs1 rs2\n1.0 0.0\n0.0 1.0\n")
        records, gwas_map, ld_data, _ = loci.load_summaries(
            str(tmp_path / "eqtl.tsv"), str(tmp_path / "gwas.tsv"), str(tmp_path / "ld.txt")
        )
        built = loci.build_loci(records, gwas_map, ld_data)
        assert len(built) == 2

    def test_partition_accounts_for_every_candidate(self, built, loaded):
        eqtls, gwas, ld, _ = loaded
        candidates = {
            r.snp
            for r in eqtls
            if r.fdr < 0.05 and r.snp in gwas and gwas[r.snp].pval < 5e-8 and r.snp in ld
        }
        assigned = set()
        for locus in built:
            assert not (set(locus.collected_snps) & assigned)
            assigned |= set(locus.collected_snps)
        assert assigned == candidates


class TestAnalyzeLocus:
    def test_phactr1_like_locus(self, built, loaded):
        eqtls, gwas, ld, _ = loaded
        locus = [l for l in built if l.chrom == "6"][0]
        calls, diagnostics, verdict = loci.analyze_locus(locus, "MAM", eqtls, gwas, ld)
        assert verdict in ("ok", "warn")
        effects = {c.gene: c.effect for c in calls}
        assert effects["PHACTR1"] == pytest.approx(0.19, abs=1e-6)
        assert all(abs(v) < 0.1 for g, v in effects.items() if g != "PHACTR1")
        causal = [c.gene for c in calls if c.causal]
        assert causal == ["PHACTR1"]

    def test_adamts7_like_locus(self, built, loaded):
        eqtls, gwas, ld, _ = loaded
        locus = [l for l in built if l.chrom == "15"][0]
        calls, _, verdict = loci.analyze_locus(locus, "AOR", eqtls, gwas, ld)
        effects = {c.gene: c.effect for c in calls}
        assert effects["ADAMTS7"] == pytest.approx(0.18, abs=1e-6)
        assert effects["CTSH"] == pytest.approx(0.025, abs=1e-6)
        flags = {c.gene: c.causal for c in calls}
        assert flags == {"ADAMTS7": True, "CTSH": False}

    def test_rank_deficient_non_identifiable(self, tmp_path):
        # two genes with proportional instrument signatures
        rows = []
        for snp, pos, b in (("rs1", 100, 0.4), ("rs2", 4100, 0.2)):
            rows.append(f"{snp}\t1\t{pos}\tGENE1\tLIV\t{b}\t0.01\t0.3\t0.001")
            rows.append(f"{snp}\t1\t{pos}\tGENE2\tLIV\t{2 * b}\t0.01\t0.3\t0.001")
        (tmp_path / "eqtl.tsv").write_text(
            "snp\tchrom\tpos\tgene\ttissue\tbeta\tse\tmaf\tfdr\n" + "\n".join(rows) + "\n"
        )
        (tmp_path / "gwas.tsv").write_text(
            "snp\tchrom\tpos\tbeta\tse\tpval\tn\n"
            "rs1\t1\t100\t0.08\t0.004\t1e-12\t10000\n"
            "rs2\t1\t4100\t0.04\t0.004\t2e-10\t10000\n"
        )
        (tmp_path / "ld.txt").write_text("rs1 rs2\n1.0 0.4\n0.4 1.0\n")
        records, gwas_map, ld_data, _ = loci.load_summaries(
            str(tmp_path / "eqtl.tsv"), str(tmp_path / "gwas.tsv"), str(tmp_path / "ld.txt")
        )
        built = loci.build_loci(records, gwas_map, ld_data)
        calls, diagnostics, verdict = loci.analyze_locus(
            built[0], "LIV", records, gwas_map, ld_data
        )
        assert verdict == "non_identifiable"
        assert calls == []

    def test_more_genes_than_instruments_flagged(self, built):
        locus = [l for l in built if l.chrom == "19"][0]
        assert locus.identifiable("LIV")


class TestMultiTissue:
    PAIRS = [("CARM1", "SKLM"), ("RGL3", "LIV"), ("CARM1", "SF"), ("SMARCA4", "LIV")]

    def test_gene_tissue_pairs(self, built, loaded):
        eqtls, gwas, ld, _ = loaded
        locus = [l for l in built if l.chrom == "19"][0]
        calls, _, verdict = loci.multi_tissue_analysis(locus, self.PAIRS, eqtls, gwas, ld)
        assert verdict == "ok"
        results = {(c.gene, c.tissue): c for c in calls}
        assert results[("CARM1", "SKLM")].effect == pytest.approx(0.18, abs=1e-6)
        assert results[("RGL3", "LIV")].effect == pytest.approx(-0.19, abs=1e-6)
        assert results[("CARM1", "SF")].effect == pytest.approx(-0.02, abs=1e-6)
        assert results[("SMARCA4", "LIV")].effect == pytest.approx(-0.01, abs=1e-6)
        assert [ (c.gene, c.tissue) for c in calls if c.causal ] == [
            ("CARM1", "SKLM"),
            ("RGL3", "LIV"),
        ]

    def test_pair_count_exceeding_instruments(self, built, loaded):
        eqtls, gwas, ld, _ = loaded
        locus = [l for l in built if l.chrom == "19"][0]
        too_many = self.PAIRS + [("GENE_X", "LIV")]
        calls, _, verdict = loci.multi_tissue_analysis(locus, too_many, eqtls, gwas, ld)
        assert verdict == "non_identifiable"

    def test_single_tissue_reduction(self, built, loaded):
        eqtls, gwas, ld, _ = loaded
        locus = [l for l in built if l.chrom == "15"][0]
        pairs = [("ADAMTS7", "AOR"), ("CTSH", "AOR")]
        pair_calls, _, _ = loci.multi_tissue_analysis(locus, pairs, eqtls, gwas, ld)
        tissue_calls, _, _ = loci.analyze_locus(locus, "AOR", eqtls, gwas, ld)
        pair_effects = {c.gene: c.effect for c in pair_calls}
        tissue_effects = {c.gene: c.effect for c in tissue_calls}
        assert pair_effects == pytest.approx(tissue_effects)


class TestClassifyCausal:
    def test_threshold_flags(self):
        calls = [
            loci.CausalGeneCall("L", "A", "T", 0.19, 0.01, 1e-10, False, False),
            loci.CausalGeneCall("L", "B", "T", 0.099, 0.01, 1e-10, False, False),
            loci.CausalGeneCall("L", "C", "T", -0.27, 0.01, 2e-4, False, False),
        ]
        flagged, summary = loci.classify_causal(calls)
        assert [c.causal for c in flagged] == [True, False, True]
        assert [c.bonferroni for c in flagged] == [True, True, True]
        assert summary["L"]["n_causal"] == 2

    def test_boundary_is_strict(self):
        calls = [loci.CausalGeneCall("L", "A", "T", 0.1, 0.01, 0.5, False, False)]
        flagged, _ = loci.classify_causal(calls)
        assert flagged[0].causal  # |effect| >= 0.1 counts


class TestPipeline:
    def test_deterministic_output_bytes(self, fixture_paths, tmp_path):
        out1 = tmp_path / "a"
        out2 = tmp_path / "b"
        loci.run_pipeline(*fixture_paths, str(out1), threads=1)
        loci.run_pipeline(*fixture_paths, str(out2), threads=3)
        for name in sorted(os.listdir(out1)):
            a = (out1 / name).read_bytes()
            b = (out2 / name).read_bytes()
            assert a == b, name

    def test_golden_calls_file(self, fixture_paths, tmp_path):
        """The fixture trio reproduces the committed golden calls byte for byte."""
        out = tmp_path / "golden"
        loci.run_pipeline(*fixture_paths, str(out))
        golden = os.path.join(os.path.dirname(__file__), "golden", "causal_gene_calls.csv")
        assert (out / "causal_gene_calls.csv").read_bytes() == open(golden, "rb").read()

    def test_report_contents(self, fixture_paths, tmp_path):
        out = tmp_path / "r"
        summary = loci.run_pipeline(*fixture_paths, str(out))
        assert summary["n_loci"] == 3
        report = json.loads((out / "locus_6_12891000.json").read_text())
        assert report["tissues"]["MAM"]["verdict"] in ("ok", "warn")
        assert report["closure_ok"]
        assert "log-odds" in report["effect_scale"]
        csv_text = (out / "causal_gene_calls.csv").read_text().splitlines()
        assert csv_text[0].startswith("locus_id,gene,tissue,effect")
        assert len(csv_text) == 1 + summary["n_calls"]
