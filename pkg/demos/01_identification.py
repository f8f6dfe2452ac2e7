"""Identification on causal diagrams: path sums, d-separation, instrumental sets.

Walks through the three canonical locus diagrams: a single causal variant
with one gene, two correlated variants with two genes (identifiable), and
a single causal variant tagging two genes through LD (non-identifiable).
"""

import numpy as np

from mvmr import graph

# --- One gene, one variant: the classical instrumental-variable triangle.
single = graph.CausalDiagram(
    ["E", "X", "Y"],
    [("E", "X"), ("X", "Y")],
    [("X", "Y")],  # unobserved confounding between gene and trait
)
sem = graph.calibrate_unit_variances(single, {("E", "X"): 0.5, ("X", "Y"): 0.3}, {("X", "Y"): 0.15})
sigma = graph.implied_covariance(sem)
print("single-gene locus:")
print("  instrumental set?", graph.check_instrumental_set(single, ["E"], ["X"], "Y").satisfied)
ratio = sigma[single.index("E"), single.index("Y")] / sigma[single.index("E"), single.index("X")]
print(f"  ratio sigma_EY / sigma_EX = {ratio:.3f} (true effect 0.3)")

# --- Two genes, two correlated variants: identifiable despite LD.
pleio = graph.CausalDiagram(
    ["E1", "E2", "X1", "X2", "Y"],
    [("E1", "X1"), ("E1", "X2"), ("E2", "X1"), ("E2", "X2"), ("X1", "Y"), ("X2", "Y")],
    [("E1", "E2")],
)
coeffs = {
    ("E1", "X1"): 0.3, ("E1", "X2"): 0.1, ("E2", "X1"): 0.2, ("E2", "X2"): 0.25,
    ("X1", "Y"): 0.2, ("X2", "Y"): 0.6,
}
sem2 = graph.calibrate_unit_variances(pleio, coeffs, {("E1", "E2"): 0.9})

print("\ntwo genes, variants in LD (r = 0.9):")
check = graph.check_instrumental_set(pleio, ["E1", "E2"], ["X1", "X2"], "Y")
print("  instrumental set?", check.satisfied)
print("  witness paths:", [(e, "->".join(p.nodes)) for e, p in check.witness])

# every unblocked path between E1 and Y, and the path-sum covariance
paths = graph.enumerate_paths(pleio, "E1", "Y")
print(f"  {len(paths)} unblocked paths E1~Y; path-rule covariance =",
      round(graph.wright_covariance(pleio, sem2, "E1", "Y"), 6))
print("  matrix-formula covariance =",
      round(graph.implied_covariance(sem2)[pleio.index("E1"), pleio.index("Y")], 6))

# d-separation once the gene->trait edges are removed (condition 2)
removed = [("X1", "Y"), ("X2", "Y")]
print("  E1 d-separated from Y without gene->trait edges?",
      graph.d_separated(pleio, "E1", "Y", removed))

# --- One causal variant, second variant only in LD: condition 3 fails.
tagging = graph.CausalDiagram(
    ["E1", "E2", "X1", "X2", "Y"],
    [("E1", "X1"), ("E1", "X2"), ("X1", "Y"), ("X2", "Y")],
    [("E1", "E2")],
)
verdict = graph.check_instrumental_set(tagging, ["E1", "E2"], ["X1", "X2"], "Y")
print("\nsingle causal variant tagging two genes:")
print(f"  instrumental set? {verdict.satisfied} (violates condition {verdict.failed_condition})")
