"""One-time generator for the bundled locus fixtures.

Produces, under src/mvmr/data/fixtures/:

* ``slc22a3_lpa_plg.json``: 8-SNP Markov-chain LD panel whose greedy
  r^2-threshold subsets have sizes 3/4/5/6/7/8 at thresholds
  0.25/0.3/0.4/0.5/0.8/0.96, plus MAFs and the liver gene trio with
  effects (0.15, -0.05, -0.27).
* ``mras_esyt3.json``: 5-SNP panel for the two-sample aorta locus with
  effects (0.208, -0.294).
* ``adamts7_ctsh_mam.json``: 6-SNP panel for the type-1/power study.
* ``eqtl.tsv`` / ``gwas.tsv`` / ``ld.txt``: a three-locus pipeline fixture
  (chr6 five-gene arterial locus, chr15 two-gene locus, chr19 multi-tissue
  locus) with outcome covariances constructed from the per-locus effect
  vectors, so the least-squares pipeline recovers those effects exactly.

Fixture entries not quoted from published tables are generated here once
with fixed seeds, committed, and treated as test fixtures rather than
ground truth.  Rerunning the script reproduces the files byte for byte.
"""

import json
import os
import sys

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from mvmr.simulate import GenotypeModel, select_by_ld_threshold  # noqa: E402

HERE = os.path.dirname(os.path.abspath(__file__))
OUT = os.path.join(HERE, "..", "src", "mvmr", "data", "fixtures")

SUBSET_TARGETS = {0.25: 3, 0.30: 4, 0.40: 5, 0.50: 6, 0.80: 7, 0.96: 8}


def chain_closure(links):
    L = len(links) + 1
    out = np.eye(L)
    for i in range(L):
        acc = 1.0
        for j in range(i + 1, L):
            acc *= links[j - 1]
            out[i, j] = out[j, i] = acc
    return out


def search_slc_links(seed=20240801, tries=400_000):
    rng = np.random.default_rng(seed)
    for _ in range(tries):
        links = np.round(rng.uniform(0.55, 0.93, size=7), 3)
        ld = chain_closure(links)
        if all(
            len(select_by_ld_threshold(ld, t)) == n for t, n in SUBSET_TARGETS.items()
        ):
            return links
    raise SystemExit("no link vector found for the subset-size targets")


def feasible_markov(mafs, links):
    try:
        GenotypeModel(mafs, links)
        return True
    except Exception:
        return False


def write_json(name, payload):
    os.makedirs(OUT, exist_ok=True)
    path = os.path.join(OUT, name)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")
    print("wrote", path)


def make_scenario_fixtures():
    links = search_slc_links()
    ld = chain_closure(links)
    print("slc links:", links.tolist())
    for t, n in SUBSET_TARGETS.items():
        got = select_by_ld_threshold(ld, t)
        print(f"  threshold {t}: {len(got)} SNPs {got}")
    mafs = [0.32, 0.29, 0.35, 0.31, 0.27, 0.33, 0.30, 0.28]
    assert feasible_markov(mafs, links.tolist())
    write_json(
        "slc22a3_lpa_plg.json",
        {
            "locus": "chr6:161089307-like liver locus",
            "snps": [f"rs6{100 + i}" for i in range(8)],
            "mafs": mafs,
            "successive_r": links.tolist(),
            "ld": [[round(v, 10) for v in row] for row in ld],
            "genes": ["SLC22A3", "LPA", "PLG"],
            "true_effects": [0.15, -0.05, -0.27],
            "causal_instruments": [0, 3, 5],
        },
    )

    mras_links = [0.62, 0.48, 0.71, 0.55]
    mras_ld = chain_closure(np.array(mras_links))
    mras_mafs = [0.36, 0.33, 0.30, 0.38, 0.34]
    assert feasible_markov(mras_mafs, mras_links)
    write_json(
        "mras_esyt3.json",
        {
            "locus": "chr3:138121920-like aorta locus",
            "snps": [f"rs3{200 + i}" for i in range(5)],
            "mafs": mras_mafs,
            "successive_r": mras_links,
            "ld": [[round(v, 10) for v in row] for row in mras_ld],
            "genes": ["MRAS", "ESYT3"],
            "true_effects": [0.208, -0.294],
            "causal_instruments": [0, 2],
        },
    )

    adam_links = [0.58, 0.44, 0.66, 0.52, 0.61]
    adam_ld = chain_closure(np.array(adam_links))
    adam_mafs = [0.31, 0.28, 0.35, 0.30, 0.33, 0.29]
    assert feasible_markov(adam_mafs, adam_links)
    write_json(
        "adamts7_ctsh_mam.json",
        {
            "locus": "chr15:79124475-like mammary-artery locus",
            "snps": [f"rs15{300 + i}" for i in range(6)],
            "mafs": adam_mafs,
            "successive_r": adam_links,
            "ld": [[round(v, 10) for v in row] for row in adam_ld],
            "genes": ["ADAMTS7", "CTSH"],
            "true_effects": [0.27, -0.05],
            "causal_instruments": [0, 2, 4],
        },
    )


# ---------------------------------------------------------------------------
# Pipeline fixture trio (eqtl.tsv / gwas.tsv / ld.txt)


def _chain_with_inserts(base_links, inserts):
    """Insert (position, r) extra SNPs into a keeper chain; returns the
    full link list and the keeper indices in the expanded panel."""
    links = []
    keepers = [0]
    cursor = 0
    for i, link in enumerate(base_links, start=1):
        extras = [r for pos, r in inserts if pos == i - 1]
        for r in extras:
            links.append(r)
            cursor += 1
        links.append(link)
        cursor += 1
        keepers.append(cursor)
    extras = [r for pos, r in inserts if pos == len(base_links)]
    for r in extras:
        links.append(r)
        cursor += 1
    return links, keepers


def make_pipeline_fixture(seed=20240802):
    rng = np.random.default_rng(seed)
    gwas_n = 141217
    rows_eqtl = []
    rows_gwas = []
    ld_blocks = []
    snp_names = []

    def add_locus(chrom, start, prefix, keep_links, insert_spec, gene_effects, tissues_map, lead_extra_p):
        """insert_spec: list of (keeper_gap_index, r) for pruned SNPs.

        The recorded (masked) instrument-gene beta matrix is what the
        pipeline reconstructs, so the outcome covariances are built from
        that masked matrix times the effect vector: least squares then
        recovers the effects exactly.
        """
        links, keeper_idx = _chain_with_inserts(keep_links, insert_spec)
        ld = chain_closure(np.array(links))
        n_all = ld.shape[0]
        names = [f"rs{prefix}{i:02d}" for i in range(n_all)]
        positions = [start + 4000 * i for i in range(n_all)]
        keepers = [names[i] for i in keeper_idx]

        genes = list(gene_effects)
        effects = np.array([gene_effects[g] for g in genes])
        K = len(genes)
        Lk = len(keeper_idx)
        ld_keep = ld[np.ix_(keeper_idx, keeper_idx)]

        mask = np.zeros((Lk, K), dtype=bool)
        for tissue, assignments in tissues_map.items():
            for gene, keeper_sel in assignments:
                mask[list(keeper_sel), genes.index(gene)] = True

        # eQTL architecture: per gene a couple of driver SNPs among the
        # keepers; betas are LD-propagated driver weights, scaled to a
        # realistic size, then masked to the recorded associations.
        while True:
            W = np.zeros((Lk, K))
            for k in range(K):
                drivers = rng.choice(Lk, size=2, replace=False)
                W[drivers, k] = rng.uniform(0.25, 0.6, size=2) * rng.choice([-1, 1], 2)
            sigma_EX = ld_keep @ W
            col_norm = np.abs(sigma_EX).max(axis=0)
            sigma_EX = sigma_EX / col_norm[None, :] * rng.uniform(0.35, 0.55, size=K)
            sigma_EX = np.round(sigma_EX, 6) * mask
            svals = np.linalg.svd(sigma_EX, compute_uv=False)
            norms = np.linalg.norm(sigma_EX, axis=0)
            if norms.min() <= 0:
                continue
            G = (sigma_EX / norms).T @ (sigma_EX / norms)
            if np.linalg.det(G) > 0.05 and svals[-1] > 0.05:
                break
        sigma_EY = sigma_EX @ effects

        for tissue, assignments in tissues_map.items():
            for gene, keeper_sel in assignments:
                k = genes.index(gene)
                for i in keeper_sel:
                    rows_eqtl.append(
                        (keepers[i], chrom, positions[keeper_idx[i]], gene, tissue,
                         float(sigma_EX[i, k]), 0.03, 0.3, 0.001)
                    )

        # pruned SNPs share the lead's strongest gene so they are listed
        lead_gene = genes[int(np.argmax(np.abs(sigma_EX[0])))]
        first_tissue = next(iter(tissues_map))
        for i, name in enumerate(names):
            if name in keepers:
                continue
            rows_eqtl.append(
                (name, chrom, positions[i], lead_gene, first_tissue,
                 round(float(sigma_EX[0, genes.index(lead_gene)] * ld[i, keeper_idx[0]]), 6),
                 0.03, 0.3, 0.001)
            )

        # GWAS rows: every SNP genome-wide significant; the lead gets the
        # smallest p-value.  Non-keeper betas follow their LD with the lead.
        keeper_pos = {name: j for j, name in enumerate(keepers)}
        for i, name in enumerate(names):
            if name in keeper_pos:
                beta = float(sigma_EY[keeper_pos[name]])
            else:
                beta = float(ld[i, keeper_idx[0]] * sigma_EY[0])
            if name == keepers[0]:
                p = lead_extra_p
            else:
                p = lead_extra_p * (10 + i) * 1.7
            rows_gwas.append((name, chrom, positions[i], round(beta, 6), 0.004, p, gwas_n))

        ld_blocks.append(ld)
        snp_names.extend(names)
        return keepers, sigma_EX, sigma_EY

    # chr6 arterial locus: 12 keepers, 5 genes, one causal; keeper links
    # chosen so mutual keeper r^2 spans [0.17, 0.86]
    strongest = 0.9273  # r^2 = 0.86
    span = np.sqrt(0.17) / 0.999  # product of keeper links incl. the lead link
    other = (span / strongest**2) ** (1.0 / 9.0)
    keep_links = [strongest] + [round(other, 6)] * 9 + [strongest]
    inserts = [(0, 0.9995), (0, 0.9995), (11, 0.98)]
    genes6 = {"PHACTR1": 0.19, "GFOD1": 0.05, "TBC1D7": -0.03, "RP1_257A7_4": 0.02, "RP1_257A7_5": 0.08}
    tissues6 = {
        "MAM": [
            ("PHACTR1", range(12)),
            ("GFOD1", range(0, 12, 2)),
            ("TBC1D7", range(1, 12, 2)),
            ("RP1_257A7_4", range(0, 12, 3)),
            ("RP1_257A7_5", range(2, 12, 3)),
        ]
    }
    add_locus("6", 12_891_000, "6", keep_links, inserts, genes6, tissues6, 2.0e-14)

    # chr15 locus: 9 keepers, 2 genes
    keep_links15 = [0.82, 0.75, 0.97, 0.70, 0.78, 0.74, 0.85, 0.72]
    inserts15 = [(4, 0.98)]
    genes15 = {"ADAMTS7": 0.18, "CTSH": 0.025}
    tissues15 = {
        "AOR": [("ADAMTS7", range(9)), ("CTSH", range(0, 9, 2))],
    }
    add_locus("15", 79_135_000, "15", keep_links15, inserts15, genes15, tissues15, 6.0e-13)

    # chr19 multi-tissue locus: 4 keepers, gene-tissue pair ground truth
    keep_links19 = [0.66, 0.58, 0.71]
    genes19_pairs = [
        ("CARM1", "SKLM", 0.18),
        ("RGL3", "LIV", -0.19),
        ("CARM1", "SF", -0.02),
        ("SMARCA4", "LIV", -0.01),
    ]
    links19, keeper19 = _chain_with_inserts(keep_links19, [(3, 0.98)])
    ld19 = chain_closure(np.array(links19))
    names19 = [f"rs19{i:02d}" for i in range(ld19.shape[0])]
    pos19 = [11_052_000 + 4000 * i for i in range(ld19.shape[0])]
    keepers19 = [names19[i] for i in keeper19]
    ld19_keep = ld19[np.ix_(keeper19, keeper19)]
    # pair design: rows = 4 keepers, columns = the 4 gene-tissue pairs
    pattern = np.array(
        [
            [0.45, 0.00, 0.38, 0.00],
            [0.36, 0.30, 0.00, 0.22],
            [0.00, 0.47, 0.31, 0.00],
            [0.00, 0.28, 0.00, 0.41],
        ]
    )
    sigma_EX19 = pattern  # recorded associations only; zeros stay unrecorded
    c19 = np.array([eff for _, _, eff in genes19_pairs])
    sigma_EY19 = sigma_EX19 @ c19
    for j, (gene, tissue, _) in enumerate(genes19_pairs):
        for i in range(4):
            if sigma_EX19[i, j] != 0.0:
                rows_eqtl.append(
                    (keepers19[i], "19", pos19[keeper19[i]], gene, tissue,
                     round(float(sigma_EX19[i, j]), 6), 0.03, 0.3, 0.001)
                )
    # the pruned chr19 SNP mirrors the lead's top association
    rows_eqtl.append(
        (names19[-1], "19", pos19[-1], "CARM1", "SKLM",
         round(float(sigma_EX19[0, 0] * ld19[-1, keeper19[0]]), 6), 0.03, 0.3, 0.001)
    )
    for i, name in enumerate(names19):
        if name in keepers19:
            beta = float(sigma_EY19[keepers19.index(name)])
        else:
            beta = float(ld19[i, 0] * sigma_EY19[0])
        p = 3.0e-12 if name == keepers19[0] else 3.0e-12 * (11 + i) * 1.9
        rows_gwas.append((name, "19", pos19[i], round(beta, 6), 0.004, p, gwas_n))
    ld_blocks.append(ld19)
    snp_names.extend(names19)

    # assemble block-diagonal LD over all loci
    total = sum(b.shape[0] for b in ld_blocks)
    ld_all = np.zeros((total, total))
    offset = 0
    for block in ld_blocks:
        n = block.shape[0]
        ld_all[offset : offset + n, offset : offset + n] = block
        offset += n

    os.makedirs(OUT, exist_ok=True)
    with open(os.path.join(OUT, "eqtl.tsv"), "w", encoding="utf-8", newline="") as fh:
        fh.write("snp\tchrom\tpos\tgene\ttissue\tbeta\tse\tmaf\tfdr\n")
        for row in rows_eqtl:
            fh.write("\t".join(str(v) for v in row) + "\n")
    with open(os.path.join(OUT, "gwas.tsv"), "w", encoding="utf-8", newline="") as fh:
        fh.write("snp\tchrom\tpos\tbeta\tse\tpval\tn\n")
        for row in rows_gwas:
            fh.write("\t".join(str(v) for v in row) + "\n")
    with open(os.path.join(OUT, "ld.txt"), "w", encoding="utf-8", newline="") as fh:
        fh.write(" ".join(snp_names) + "\n")
        for i in range(total):
            fh.write(" ".join(repr(round(float(v), 10)) for v in ld_all[i]) + "\n")
    print("wrote pipeline fixture trio:", len(rows_eqtl), "eqtl rows,", len(rows_gwas), "gwas rows,", total, "snps")


if __name__ == "__main__":
    make_scenario_fixtures()
    make_pipeline_fixture()
