"""Locus construction and causal-gene classification from summary files.

Ingests eQTL associations, GWAS outcome statistics and an LD matrix;
groups genome-wide significant eQTL SNPs into loci around lead SNPs;
prunes near-duplicate instruments; and runs per-tissue (or gene-tissue
pair) multivariable MR to classify candidate causal genes by effect-size
threshold and multiple-testing flag.

File formats (all UTF-8):

* eQTL TSV, header required:
  ``snp chrom pos gene tissue beta se maf fdr`` (tab separated)
* GWAS TSV, header required: ``snp chrom pos beta se pval n``
* LD file: first line whitespace-separated SNP ids, then a square,
  symmetric matrix of r values (not r squared).

Outcome effects inherit the GWAS scale; for case/control GWAS the
estimates read as effects on the log-odds of the outcome (recorded as
report metadata, no conversion applied).
"""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import MvmrError, SummaryFormatError, UnderdeterminedError
from .estimators import (
    BONFERRONI_DEFAULT,
    SummaryStatistics,
    estimate,
    identifiability_diagnostics,
    p_values,
    standard_errors,
)

OUTCOME_SCALE_NOTE = "effects are per unit of the outcome association scale (log-odds for case/control GWAS)"


@dataclass(frozen=True)
class EqtlRecord:
    snp: str
    chrom: str
    pos: int
    gene: str
    tissue: str
    beta: float
    se: float
    maf: float
    fdr: float

    @property
    def significant(self):
        return self.fdr < 0.05


@dataclass(frozen=True)
class GwasRecord:
    snp: str
    chrom: str
    pos: int
    beta: float
    se: float
    pval: float
    n: int


@dataclass
class LdData:
    snps: tuple
    matrix: np.ndarray

    def __post_init__(self):
        self._index = {snp: i for i, snp in enumerate(self.snps)}

    def __contains__(self, snp):
        return snp in self._index

    def r(self, a, b):
        return float(self.matrix[self._index[a], self._index[b]])

    def submatrix(self, snps):
        idx = [self._index[s] for s in snps]
        return self.matrix[np.ix_(idx, idx)]


@dataclass
class LocusDefinition:
    locus_id: str
    lead_snp: str
    chrom: str
    lead_pos: int
    member_snps: tuple  # instruments after pruning, lead first
    collected_snps: tuple  # before pruning
    pruned: tuple  # (snp, reason, partner_snp)
    genes_by_tissue: dict
    instruments_by_tissue: dict
    dropped_snps: tuple = ()  # (snp, reason)
    closure_ok: bool = True

    def tissues(self):
        return sorted(self.genes_by_tissue)

    def identifiable(self, tissue):
        return len(self.instruments_by_tissue.get(tissue, ())) >= len(
            self.genes_by_tissue.get(tissue, ())
        )


@dataclass
class CausalGeneCall:
    locus_id: str
    gene: str
    tissue: str
    effect: float
    se: float
    p: float
    causal: bool
    bonferroni: bool


@dataclass(frozen=True)
class PipelineConfig:
    radius: int = 500_000
    gwas_p: float = 5e-8
    fdr: float = 0.05
    nonzero_ld: float = 0.01  # |r| above this counts as linked to the lead
    perfect_ld_r2: float = 0.99
    prune_r2: float = 0.95
    causal_threshold: float = 0.1
    bonferroni: float = BONFERRONI_DEFAULT
    det_pass: float = 0.05
    det_fail: float = 0.001
    estimator: str = "ls"


# ---------------------------------------------------------------------------
# Parsing


def _parse_row(parts, schema, path, lineno):
    if len(parts) != len(schema):
        raise SummaryFormatError(
            f"expected {len(schema)} columns, found {len(parts)}", path, lineno
        )
    out = []
    for (name, conv), raw in zip(schema, parts):
        try:
            out.append(conv(raw))
        except ValueError:
            raise SummaryFormatError(
                f"cannot parse column {name!r} from {raw!r}", path, lineno
            ) from None
    return out


_EQTL_SCHEMA = [
    ("snp", str),
    ("chrom", str),
    ("pos", int),
    ("gene", str),
    ("tissue", str),
    ("beta", float),
    ("se", float),
    ("maf", float),
    ("fdr", float),
]
_GWAS_SCHEMA = [
    ("snp", str),
    ("chrom", str),
    ("pos", int),
    ("beta", float),
    ("se", float),
    ("pval", float),
    ("n", int),
]


def _read_tsv(path, header, schema, builder):
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh, delimiter="\t")
        try:
            first = next(reader)
        except StopIteration:
            raise SummaryFormatError("empty file, header required", path, 1) from None
        if [c.strip() for c in first] != header:
            raise SummaryFormatError(
                f"bad header {first!r}, expected {header!r}", path, 1
            )
        for lineno, parts in enumerate(reader, start=2):
            if not parts or (len(parts) == 1 and not parts[0].strip()):
                continue
            rows.append(builder(_parse_row(parts, schema, path, lineno), path, lineno))
    return rows


def _build_eqtl(values, path, lineno):
    record = EqtlRecord(*values)
    if not 0.0 <= record.fdr <= 1.0:
        raise SummaryFormatError(f"fdr {record.fdr} outside [0, 1]", path, lineno)
    return record


def _build_gwas(values, path, lineno):
    record = GwasRecord(*values)
    if not 0.0 < record.pval <= 1.0:
        raise SummaryFormatError(f"p-value {record.pval} outside (0, 1]", path, lineno)
    return record


def _read_ld(path):
    with open(path, encoding="utf-8") as fh:
        lines = [line.strip() for line in fh if line.strip()]
    if not lines:
        raise SummaryFormatError("empty LD file", path, 1)
    snps = tuple(lines[0].split())
    L = len(snps)
    if len(set(snps)) != L:
        raise SummaryFormatError("duplicate SNP ids in LD header", path, 1)
    if len(lines) - 1 != L:
        raise SummaryFormatError(
            f"LD matrix not square: {L} ids but {len(lines) - 1} rows", path, len(lines)
        )
    matrix = np.empty((L, L))
    for i, line in enumerate(lines[1:], start=2):
        parts = line.split()
        if len(parts) != L:
            raise SummaryFormatError(
                f"LD row has {len(parts)} entries, expected {L}", path, i
            )
        try:
            matrix[i - 2] = [float(v) for v in parts]
        except ValueError:
            raise SummaryFormatError("cannot parse LD entry", path, i) from None
    if np.max(np.abs(matrix - matrix.T)) > 1e-8:
        raise SummaryFormatError("LD matrix not symmetric within 1e-8", path)
    return LdData(snps, (matrix + matrix.T) / 2.0)


def load_summaries(eqtl_path, gwas_path, ld_path):
    """Parse and cross-reference the three summary files.

    Returns ``(eqtls, gwas_by_snp, ld, warnings)``.  SNPs appearing in the
    eQTL table but missing from the LD matrix are reported as warnings
    (and later dropped from loci); duplicate (snp, gene, tissue) rows are
    errors.
    """
    eqtls = _read_tsv(
        eqtl_path, [c for c, _ in _EQTL_SCHEMA], _EQTL_SCHEMA, _build_eqtl
    )
    gwas_rows = _read_tsv(
        gwas_path, [c for c, _ in _GWAS_SCHEMA], _GWAS_SCHEMA, _build_gwas
    )
    ld = _read_ld(ld_path)

    seen = set()
    for record in eqtls:
        key = (record.snp, record.gene, record.tissue)
        if key in seen:
            raise SummaryFormatError(
                f"duplicate eQTL row for (snp, gene, tissue) = {key}", eqtl_path
            )
        seen.add(key)
    gwas_by_snp = {}
    for record in gwas_rows:
        if record.snp in gwas_by_snp:
            raise SummaryFormatError(f"duplicate GWAS row for {record.snp}", gwas_path)
        gwas_by_snp[record.snp] = record

    warnings = []
    if not eqtls:
        warnings.append("eQTL table is empty")
    missing = sorted({r.snp for r in eqtls} - set(ld.snps))
    if missing:
        warnings.append(f"{len(missing)} eQTL SNPs missing from LD matrix: {missing}")
    return eqtls, gwas_by_snp, ld, warnings


# ---------------------------------------------------------------------------
# Locus construction


def build_loci(eqtls, gwas_by_snp, ld, config=PipelineConfig()):
    """Greedy lead-SNP locus construction.

    Significant eQTL SNPs that are genome-wide significant in the GWAS are
    visited in order of GWAS p-value (ties by chromosome then position);
    each lead collects every listed SNP within the radius that has nonzero
    LD with it, the collection is removed from the list, and the procedure
    repeats.  Within a locus, SNPs in effectively perfect LD with the lead
    are removed first, then near-duplicates at the pruning threshold are
    dropped keeping the smaller GWAS p-value (tie: smaller position).
    """
    sig = [r for r in eqtls if r.fdr < config.fdr]
    snp_info = {}
    dropped = []
    for r in sig:
        snp_info.setdefault(r.snp, (r.chrom, r.pos))
    candidates = []
    for snp, (chrom, pos) in snp_info.items():
        gw = gwas_by_snp.get(snp)
        if gw is None or gw.pval >= config.gwas_p:
            continue
        if snp not in ld:
            dropped.append((snp, "missing from LD matrix"))
            continue
        candidates.append((gw.pval, chrom, pos, snp))
    candidates.sort()

    sig_by_snp_tissue = {}
    for r in sig:
        sig_by_snp_tissue.setdefault(r.snp, []).append(r)

    loci = []
    remaining = candidates[:]
    while remaining:
        _, chrom, pos, lead = remaining[0]
        collected = [
            entry
            for entry in remaining
            if entry[1] == chrom
            and abs(entry[2] - pos) <= config.radius
            and (entry[3] == lead or abs(ld.r(lead, entry[3])) > config.nonzero_ld)
        ]
        remaining = [e for e in remaining if e not in collected]

        pruned = []
        kept = []
        # collected is GWAS-p sorted with the lead first
        for pval, _, position, snp in collected:
            if snp != lead and ld.r(lead, snp) ** 2 >= config.perfect_ld_r2:
                pruned.append((snp, "perfect_ld_with_lead", lead))
                continue
            partner = next(
                (k for k in kept if ld.r(k, snp) ** 2 >= config.prune_r2), None
            )
            if partner is not None:
                pruned.append((snp, "near_duplicate", partner))
                continue
            kept.append(snp)

        genes_by_tissue = {}
        instruments_by_tissue = {}
        for snp in kept:
            for record in sig_by_snp_tissue.get(snp, ()):
                genes_by_tissue.setdefault(record.tissue, set()).add(record.gene)
                instruments_by_tissue.setdefault(record.tissue, set()).add(snp)
        genes_by_tissue = {
            t: tuple(sorted(genes)) for t, genes in genes_by_tissue.items()
        }
        instruments_by_tissue = {
            t: tuple(s for s in kept if s in snps)
            for t, snps in instruments_by_tissue.items()
        }

        loci.append(
            LocusDefinition(
                locus_id=f"chr{chrom}:{pos}",
                lead_snp=lead,
                chrom=chrom,
                lead_pos=pos,
                member_snps=tuple(kept),
                collected_snps=tuple(e[3] for e in collected),
                pruned=tuple(pruned),
                genes_by_tissue=genes_by_tissue,
                instruments_by_tissue=instruments_by_tissue,
                dropped_snps=tuple(dropped),
                closure_ok=True,
            )
        )
    loci.sort(key=lambda loc: (loc.chrom, loc.lead_pos))
    return loci


def verify_closure(locus, eqtls, config=PipelineConfig()):
    """Brute-force closure check: no gene outside the locus's exposure sets
    shares a significant cis-eQTL with any instrument."""
    instruments = set(locus.member_snps)
    for record in eqtls:
        if record.fdr < config.fdr and record.snp in instruments:
            if record.gene not in locus.genes_by_tissue.get(record.tissue, ()):
                return False
    return True


# ---------------------------------------------------------------------------
# Per-locus analysis


def _locus_statistics(snps, exposures, beta_lookup, gwas_by_snp, ld):
    sigma_EX = np.zeros((len(snps), len(exposures)))
    for i, snp in enumerate(snps):
        for k, exposure in enumerate(exposures):
            sigma_EX[i, k] = beta_lookup.get((snp, exposure), 0.0)
    sigma_EY = np.array([gwas_by_snp[s].beta for s in snps])
    n_outcome = int(np.median([gwas_by_snp[s].n for s in snps]))
    return SummaryStatistics(
        sigma_EX,
        sigma_EY,
        ld.submatrix(snps),
        n_outcome=n_outcome,
        exposure_names=tuple(str(e) for e in exposures),
        instrument_names=tuple(snps),
    )


def _run_estimator(stats, locus_id, labels, config):
    report = identifiability_diagnostics(
        stats, pass_threshold=config.det_pass, fail_threshold=config.det_fail
    )
    diagnostics = report.as_dict()
    if report.rank_EX < stats.n_exposures or report.verdict == "fail":
        return [], diagnostics, "non_identifiable"
    try:
        result = estimate(stats, config.estimator)
        standard_errors(result, stats)
        p_values(result, bonferroni_threshold=config.bonferroni)
    except UnderdeterminedError as exc:
        diagnostics["error"] = str(exc)
        return [], diagnostics, "non_identifiable"
    except (MvmrError, ValueError, np.linalg.LinAlgError) as exc:
        diagnostics["error"] = str(exc)
        return [], diagnostics, "failed"
    calls = []
    for k, name in enumerate(labels):
        gene, tissue = name
        calls.append(
            CausalGeneCall(
                locus_id=locus_id,
                gene=gene,
                tissue=tissue,
                effect=float(result.effects[k]),
                se=float(result.standard_errors[k]),
                p=float(result.p_values[k]),
                causal=bool(abs(result.effects[k]) >= config.causal_threshold),
                bonferroni=bool(result.p_values[k] < config.bonferroni),
            )
        )
    return calls, diagnostics, "ok" if report.verdict == "pass" else "warn"


def analyze_locus(locus, tissue, eqtls, gwas_by_snp, ld, config=PipelineConfig()):
    """Tissue-specific MVMR for one locus.

    Uses all genes with significant cis-eQTL associations at the locus's
    instruments in the tissue as exposures; instrument-exposure entries
    with no recorded association are zero.  Returns
    ``(calls, diagnostics, verdict)``; a rank-deficient or fail-verdict
    design yields ``verdict='non_identifiable'`` with no calls rather than
    an exception.
    """
    genes = locus.genes_by_tissue.get(tissue, ())
    snps = locus.instruments_by_tissue.get(tissue, ())
    if not genes or not snps:
        return [], {}, "no_data"
    if len(snps) < len(genes):
        return (
            [],
            {"n_instruments": len(snps), "n_exposures": len(genes)},
            "non_identifiable",
        )
    beta_lookup = {
        (r.snp, r.gene): r.beta
        for r in eqtls
        if r.tissue == tissue and r.fdr < config.fdr and r.snp in set(snps)
    }
    stats = _locus_statistics(snps, genes, beta_lookup, gwas_by_snp, ld)
    labels = [(gene, tissue) for gene in genes]
    return _run_estimator(stats, locus.locus_id, labels, config)


def multi_tissue_analysis(locus, pairs, eqtls, gwas_by_snp, ld, config=PipelineConfig()):
    """MVMR with gene-tissue pairs as distinct exposures.

    ``pairs`` is a sequence of (gene, tissue) tuples; instruments are the
    locus SNPs carrying a significant association for at least one of the
    pairs.
    """
    pairs = [tuple(p) for p in pairs]
    sig = {
        (r.snp, r.gene, r.tissue): r.beta
        for r in eqtls
        if r.fdr < config.fdr and r.snp in set(locus.member_snps)
    }
    snps = [
        s
        for s in locus.member_snps
        if any((s, g, t) in sig for g, t in pairs)
    ]
    if len(snps) < len(pairs):
        return (
            [],
            {"n_instruments": len(snps), "n_exposures": len(pairs)},
            "non_identifiable",
        )
    beta_lookup = {
        (snp, (g, t)): sig[(snp, g, t)]
        for snp in snps
        for (g, t) in pairs
        if (snp, g, t) in sig
    }
    stats = _locus_statistics(snps, pairs, beta_lookup, gwas_by_snp, ld)
    return _run_estimator(stats, locus.locus_id, pairs, config)


def classify_causal(calls, threshold=0.1, bonferroni=BONFERRONI_DEFAULT):
    """Re-flag calls at the given thresholds and summarise counts."""
    flagged = []
    for call in calls:
        flagged.append(
            CausalGeneCall(
                locus_id=call.locus_id,
                gene=call.gene,
                tissue=call.tissue,
                effect=call.effect,
                se=call.se,
                p=call.p,
                causal=abs(call.effect) >= threshold,
                bonferroni=call.p < bonferroni,
            )
        )
    summary = {}
    for call in flagged:
        bucket = summary.setdefault(
            call.locus_id, {"n_calls": 0, "n_causal": 0, "by_tissue": {}}
        )
        bucket["n_calls"] += 1
        bucket["n_causal"] += int(call.causal)
        tissue = bucket["by_tissue"].setdefault(
            call.tissue, {"n_calls": 0, "n_causal": 0}
        )
        tissue["n_calls"] += 1
        tissue["n_causal"] += int(call.causal)
    return flagged, summary


# ---------------------------------------------------------------------------
# Whole-pipeline driver with deterministic reports


def _locus_report(locus, eqtls, gwas_by_snp, ld, config):
    tissues = {}
    calls_out = []
    for tissue in locus.tissues():
        calls, diagnostics, verdict = analyze_locus(
            locus, tissue, eqtls, gwas_by_snp, ld, config
        )
        tissues[tissue] = {
            "verdict": verdict,
            "genes": list(locus.genes_by_tissue.get(tissue, ())),
            "instruments": list(locus.instruments_by_tissue.get(tissue, ())),
            "diagnostics": diagnostics,
            "calls": [
                {
                    "gene": c.gene,
                    "effect": c.effect,
                    "se": c.se,
                    "p": c.p,
                    "causal": c.causal,
                    "bonferroni": c.bonferroni,
                }
                for c in calls
            ],
        }
        calls_out.extend(calls)
    report = {
        "locus_id": locus.locus_id,
        "lead_snp": locus.lead_snp,
        "chrom": locus.chrom,
        "lead_pos": locus.lead_pos,
        "instruments": list(locus.member_snps),
        "collected": list(locus.collected_snps),
        "pruned": [list(p) for p in locus.pruned],
        "closure_ok": verify_closure(locus, eqtls, config),
        "effect_scale": OUTCOME_SCALE_NOTE,
        "tissues": tissues,
    }
    return report, calls_out


def run_pipeline(
    eqtl_path, gwas_path, ld_path, out_dir, config=PipelineConfig(), threads=1
):
    """Full analysis: load, build loci, analyse every locus/tissue, write
    one JSON report per locus plus a flat calls CSV.

    Output bytes are deterministic for identical inputs and configuration,
    independent of the thread count (loci are processed independently and
    assembled in (chromosome, position) order).
    """
    eqtls, gwas_by_snp, ld, warnings = load_summaries(eqtl_path, gwas_path, ld_path)
    loci = build_loci(eqtls, gwas_by_snp, ld, config)

    def work(locus):
        return _locus_report(locus, eqtls, gwas_by_snp, ld, config)

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, loci))
    else:
        results = [work(locus) for locus in loci]

    os.makedirs(out_dir, exist_ok=True)
    all_calls = []
    report_paths = []
    for locus, (report, calls) in zip(loci, results):
        path = os.path.join(out_dir, f"locus_{locus.chrom}_{locus.lead_pos}.json")
        with open(path, "w", encoding="utf-8", newline="") as fh:
            json.dump(report, fh, sort_keys=True, indent=2)
            fh.write("\n")
        report_paths.append(path)
        all_calls.extend(calls)

    csv_path = os.path.join(out_dir, "causal_gene_calls.csv")
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["locus_id", "gene", "tissue", "effect", "se", "p", "causal", "bonferroni"]
        )
        for c in all_calls:
            writer.writerow(
                [
                    c.locus_id,
                    c.gene,
                    c.tissue,
                    repr(c.effect),
                    repr(c.se),
                    repr(c.p),
                    c.causal,
                    c.bonferroni,
                ]
            )

    summary = {
        "n_loci": len(loci),
        "n_calls": len(all_calls),
        "warnings": warnings,
        "loci": [loc.locus_id for loc in loci],
        "reports": [os.path.basename(p) for p in report_paths],
        "calls_csv": os.path.basename(csv_path),
    }
    summary_path = os.path.join(out_dir, "pipeline_summary.json")
    with open(summary_path, "w", encoding="utf-8", newline="") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return summary
