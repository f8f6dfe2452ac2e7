"""Linear structural equation models on mixed causal diagrams.

A causal diagram is a directed acyclic graph augmented with bidirected
edges that stand for correlated error terms (unobserved confounding).
Together with a coefficient matrix C and an error covariance matrix Psi
it defines the linear model

    X_i = sum_j C[i, j] * X_j + U_i,      cov(U_i, U_j) = Psi[i, j]

whose implied covariance matrix is (I - C)^-1 Psi (I - C^T)^-1.  The same
covariances can be obtained by summing path products over unblocked paths
(the method of path coefficients); both routes are implemented here and
cross-checked in the test suite.  The module also provides unconditional
d-separation and the graphical instrumental-set check that underpins
identification of direct effects in multivariable MR with correlated
instruments.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CombinatorialLimitError,
    GraphStructureError,
    PathEnumerationError,
    StandardizationError,
    UnknownNodeError,
)

DIRECTED = "directed"
BIDIRECTED = "bidirected"


def _normalize_pair(a, b):
    return (a, b) if a <= b else (b, a)


@dataclass(frozen=True)
class CausalDiagram:
    """Mixed graph of directed (causal) and bidirected (confounding) edges.

    Parameters
    ----------
    nodes : sequence of str
        Unique variable names.
    directed_edges : sequence of (source, target)
        Directed edges; must form an acyclic graph.
    bidirected_edges : sequence of (a, b)
        Unordered pairs of nodes with correlated errors.
    """

    nodes: tuple
    directed_edges: tuple
    bidirected_edges: tuple = ()

    def __init__(self, nodes, directed_edges, bidirected_edges=()):
        object.__setattr__(self, "nodes", tuple(nodes))
        object.__setattr__(
            self, "directed_edges", tuple((s, t) for s, t in directed_edges)
        )
        object.__setattr__(
            self,
            "bidirected_edges",
            tuple(_normalize_pair(a, b) for a, b in bidirected_edges),
        )
        self._validate()

    def _validate(self):
        if len(set(self.nodes)) != len(self.nodes):
            raise GraphStructureError("node names must be unique")
        known = set(self.nodes)
        for s, t in self.directed_edges:
            if s not in known or t not in known:
                raise UnknownNodeError(f"edge ({s}, {t}) references unknown node")
            if s == t:
                raise GraphStructureError(f"self loop on {s!r}")
        for a, b in self.bidirected_edges:
            if a not in known or b not in known:
                raise UnknownNodeError(f"bidirected edge ({a}, {b}) references unknown node")
            if a == b:
                raise GraphStructureError(f"bidirected self loop on {a!r}")
        if len(set(self.directed_edges)) != len(self.directed_edges):
            raise GraphStructureError("duplicate directed edge")
        if len(set(self.bidirected_edges)) != len(self.bidirected_edges):
            raise GraphStructureError("duplicate bidirected edge")
        self.topological_order()  # raises on cycles

    @property
    def n_nodes(self):
        return len(self.nodes)

    def index(self, node):
        try:
            return self.nodes.index(node)
        except ValueError:
            raise UnknownNodeError(f"unknown node {node!r}") from None

    def has_directed(self, source, target):
        return (source, target) in set(self.directed_edges)

    def has_bidirected(self, a, b):
        return _normalize_pair(a, b) in set(self.bidirected_edges)

    def parents(self, node):
        self.index(node)
        return [s for s, t in self.directed_edges if t == node]

    def children(self, node):
        self.index(node)
        return [t for s, t in self.directed_edges if s == node]

    def topological_order(self):
        """Node list with every edge source before its target.

        Raises
        ------
        GraphStructureError
            If the directed part contains a cycle.
        """
        indeg = {n: 0 for n in self.nodes}
        for _, t in self.directed_edges:
            indeg[t] += 1
        frontier = [n for n in self.nodes if indeg[n] == 0]
        order = []
        while frontier:
            node = frontier.pop()
            order.append(node)
            for child in self.children(node):
                indeg[child] -= 1
                if indeg[child] == 0:
                    frontier.append(child)
        if len(order) != len(self.nodes):
            raise GraphStructureError("directed edges contain a cycle")
        return order

    def descendants(self, node):
        """All nodes reachable from ``node`` along directed edges, incl. itself."""
        self.index(node)
        seen = {node}
        stack = [node]
        while stack:
            for child in self.children(stack.pop()):
                if child not in seen:
                    seen.add(child)
                    stack.append(child)
        return seen

    def ancestors(self, node, removed_edges=()):
        removed = set(removed_edges)
        self.index(node)
        seen = {node}
        stack = [node]
        while stack:
            current = stack.pop()
            for s, t in self.directed_edges:
                if t == current and (s, t) not in removed and s not in seen:
                    seen.add(s)
                    stack.append(s)
        return seen


class SemParameters:
    """Coefficients and error covariances for a linear SEM.

    ``coefficients[i, j]`` is the direct effect of node j on node i, so a
    directed edge (j -> i) in the companion diagram corresponds to a
    nonzero entry at ``[i, j]``.  ``error_cov`` is the symmetric matrix of
    error (co)variances; off-diagonal entries correspond to bidirected
    edges.
    """

    def __init__(self, coefficients, error_cov):
        self.coefficients = np.asarray(coefficients, dtype=float)
        self.error_cov = np.asarray(error_cov, dtype=float)
        C, psi = self.coefficients, self.error_cov
        if C.ndim != 2 or C.shape[0] != C.shape[1]:
            raise GraphStructureError("coefficient matrix must be square")
        if psi.shape != C.shape:
            raise GraphStructureError("error covariance shape mismatch")
        if not np.allclose(psi, psi.T, atol=1e-12):
            raise GraphStructureError("error covariance must be symmetric")
        if np.any(np.diag(psi) <= 0):
            raise GraphStructureError("error variances must be positive")
        eigmin = np.linalg.eigvalsh(psi).min()
        if eigmin < -1e-10:
            raise GraphStructureError(
                f"error covariance not positive semidefinite (min eig {eigmin:.3e})"
            )

    @property
    def n_nodes(self):
        return self.coefficients.shape[0]

    def validate_against(self, diagram):
        """Check the zero pattern of C and Psi against the diagram."""
        idx = {n: k for k, n in enumerate(diagram.nodes)}
        directed = {(idx[t], idx[s]) for s, t in diagram.directed_edges}
        for i in range(self.n_nodes):
            for j in range(self.n_nodes):
                if i == j:
                    if self.coefficients[i, j] != 0.0:
                        raise GraphStructureError("nonzero diagonal coefficient")
                    continue
                if self.coefficients[i, j] != 0.0 and (i, j) not in directed:
                    raise GraphStructureError(
                        f"coefficient set for missing edge "
                        f"{diagram.nodes[j]} -> {diagram.nodes[i]}"
                    )
        bidirected = {(idx[a], idx[b]) for a, b in diagram.bidirected_edges}
        bidirected |= {(j, i) for i, j in bidirected}
        for i in range(self.n_nodes):
            for j in range(i + 1, self.n_nodes):
                if self.error_cov[i, j] != 0.0 and (i, j) not in bidirected:
                    raise GraphStructureError(
                        f"error covariance set for missing bidirected edge "
                        f"{diagram.nodes[i]} <-> {diagram.nodes[j]}"
                    )

    def coefficient(self, diagram, source, target):
        return self.coefficients[diagram.index(target), diagram.index(source)]

    def error_covariance(self, diagram, a, b):
        return self.error_cov[diagram.index(a), diagram.index(b)]


def sem_from_values(diagram, coefficients, error_cov=None, error_var=None):
    """Build :class:`SemParameters` from per-edge dictionaries.

    Parameters
    ----------
    coefficients : dict
        Maps directed edges ``(source, target)`` to coefficients.
    error_cov : dict, optional
        Maps bidirected pairs ``(a, b)`` to error covariances.
    error_var : dict, optional
        Per-node error variances; default 1.0.
    """
    p = diagram.n_nodes
    C = np.zeros((p, p))
    for (s, t), value in coefficients.items():
        if not diagram.has_directed(s, t):
            raise GraphStructureError(f"no directed edge {s} -> {t} in diagram")
        C[diagram.index(t), diagram.index(s)] = value
    psi = np.zeros((p, p))
    for node in diagram.nodes:
        variance = 1.0 if error_var is None else error_var.get(node, 1.0)
        psi[diagram.index(node), diagram.index(node)] = variance
    if error_cov:
        for (a, b), value in error_cov.items():
            if not diagram.has_bidirected(a, b):
                raise GraphStructureError(f"no bidirected edge {a} <-> {b} in diagram")
            i, j = diagram.index(a), diagram.index(b)
            psi[i, j] = psi[j, i] = value
    sem = SemParameters(C, psi)
    sem.validate_against(diagram)
    return sem


def implied_covariance(sem):
    """Model-implied covariance matrix ``(I - C)^-1 Psi (I - C^T)^-1``.

    Exact closed form, no sampling.  Raises :class:`GraphStructureError`
    if (I - C) is singular, which cannot happen for acyclic systems.
    """
    p = sem.n_nodes
    imc = np.eye(p) - sem.coefficients
    try:
        B = np.linalg.solve(imc, np.eye(p))
    except np.linalg.LinAlgError:
        raise GraphStructureError(
            "(I - C) is singular; the structural system contains a cycle"
        ) from None
    sigma = B @ sem.error_cov @ B.T
    return (sigma + sigma.T) / 2.0


def calibrate_unit_variances(diagram, coefficients, error_cov=None):
    """Choose diagonal error variances so all implied variances equal one.

    Solves for the error variances node by node in topological order given
    the edge coefficients and bidirected error covariances.  Raises
    :class:`StandardizationError` when the requested coefficients leave no
    room for a positive error variance (implied variance already >= 1).
    """
    p = diagram.n_nodes
    sem0 = sem_from_values(diagram, coefficients, error_cov)
    C = sem0.coefficients
    psi = sem0.error_cov.copy()
    B = np.linalg.solve(np.eye(p) - C, np.eye(p))
    order = [diagram.index(n) for n in diagram.topological_order()]
    off = psi.copy()
    np.fill_diagonal(off, 0.0)
    diag = np.zeros(p)
    for i in order:
        other = B[i] @ off @ B[i]
        settled = sum(B[i, k] ** 2 * diag[k] for k in order[: order.index(i)])
        value = 1.0 - other - settled
        if value <= 0:
            raise StandardizationError(
                f"cannot standardize node {diagram.nodes[i]!r}: "
                f"required error variance {value:.4g} <= 0"
            )
        diag[i] = value
    np.fill_diagonal(psi, diag)
    sem = SemParameters(C, psi)
    sem.validate_against(diagram)
    return sem


# ---------------------------------------------------------------------------
# Path machinery


@dataclass(frozen=True)
class PathEdge:
    kind: str
    source: str
    target: str
    forward: bool  # True when walked tail->head (directed) or a->b order

    def arrow_at(self, node):
        """Whether this edge carries an arrowhead at ``node``."""
        if self.kind == BIDIRECTED:
            return True
        return node == self.target

    def walk_end(self):
        return self.target if self.forward else self.source

    def walk_start(self):
        return self.source if self.forward else self.target


@dataclass(frozen=True)
class Path:
    """A walk between two nodes visiting each node at most once."""

    nodes: tuple
    edges: tuple

    def __len__(self):
        return len(self.edges)

    @property
    def is_blocked(self):
        """True iff some interior node is a collider on this path."""
        for k in range(1, len(self.nodes) - 1):
            node = self.nodes[k]
            if self.edges[k - 1].arrow_at(node) and self.edges[k].arrow_at(node):
                return True
        return False

    @property
    def has_bidirected(self):
        return any(e.kind == BIDIRECTED for e in self.edges)

    @property
    def root(self):
        """Node emitting both adjacent edges (apex of an unblocked path).

        ``None`` when the path is blocked or its apex is a bidirected edge.
        """
        if self.is_blocked or self.has_bidirected:
            return None
        for k, node in enumerate(self.nodes):
            left_arrow = k > 0 and self.edges[k - 1].arrow_at(node)
            right_arrow = k < len(self.edges) and self.edges[k].arrow_at(node)
            if not left_arrow and not right_arrow:
                return node
        return None

    def weight(self, diagram, sem):
        """Product of edge parameters along the path."""
        value = 1.0
        for edge in self.edges:
            if edge.kind == DIRECTED:
                value *= sem.coefficient(diagram, edge.source, edge.target)
            else:
                value *= sem.error_covariance(diagram, edge.source, edge.target)
        return value

    def final_directed_edge(self):
        last = self.edges[-1]
        if last.kind == DIRECTED and last.forward:
            return (last.source, last.target)
        return None


def enumerate_paths(diagram, a, b, max_nodes=20, unblocked_only=True):
    """All (unblocked) paths between ``a`` and ``b`` by exhaustive DFS.

    Each node appears at most once per path.  Guarded by a diagram size
    cap because the number of mixed-edge paths grows combinatorially.
    """
    diagram.index(a)
    diagram.index(b)
    if diagram.n_nodes > max_nodes:
        raise PathEnumerationError(
            f"diagram has {diagram.n_nodes} nodes, exceeding the path "
            f"enumeration cap of {max_nodes}; raise max_nodes explicitly "
            "if this is intended"
        )
    if a == b:
        raise GraphStructureError("path enumeration requires distinct endpoints")

    adjacency = {}
    for s, t in diagram.directed_edges:
        adjacency.setdefault(s, []).append(PathEdge(DIRECTED, s, t, True))
        adjacency.setdefault(t, []).append(PathEdge(DIRECTED, s, t, False))
    for u, v in diagram.bidirected_edges:
        adjacency.setdefault(u, []).append(PathEdge(BIDIRECTED, u, v, True))
        adjacency.setdefault(v, []).append(PathEdge(BIDIRECTED, u, v, False))

    paths = []

    def extend(node, visited, node_seq, edge_seq):
        for edge in adjacency.get(node, ()):
            nxt = edge.walk_end() if edge.walk_start() == node else None
            if nxt is None or nxt in visited:
                continue
            node_seq.append(nxt)
            edge_seq.append(edge)
            if nxt == b:
                candidate = Path(tuple(node_seq), tuple(edge_seq))
                if not unblocked_only or not candidate.is_blocked:
                    paths.append(candidate)
            else:
                visited.add(nxt)
                extend(nxt, visited, node_seq, edge_seq)
                visited.remove(nxt)
            node_seq.pop()
            edge_seq.pop()

    extend(a, {a}, [a], [])
    return paths


def wright_covariance(
    diagram,
    sem,
    a,
    b,
    standardized=True,
    root_variances=None,
    max_nodes=20,
):
    """Covariance of two variables by summing unblocked path products.

    In standardized mode every path contributes the plain product of its
    edge parameters; the mode is only valid when the model's implied
    variances are all one, which is verified up to 1e-8.  Otherwise the
    caller must supply ``root_variances`` (a node -> variance map) and each
    path whose apex is a single root node is additionally multiplied by
    that node's variance; paths topped by a bidirected edge already carry
    the error covariance as their apex factor.
    """
    diagram.index(a)
    diagram.index(b)
    if standardized:
        variances = np.diag(implied_covariance(sem))
        if np.max(np.abs(variances - 1.0)) > 1e-8:
            raise StandardizationError(
                "standardized mode requires unit implied variances; "
                f"max |var - 1| = {np.max(np.abs(variances - 1.0)):.3e}"
            )
        if a == b:
            return 1.0
    elif a == b:
        raise GraphStructureError(
            "variances are not path sums; query distinct nodes or use "
            "implied_covariance"
        )

    total = 0.0
    for path in enumerate_paths(diagram, a, b, max_nodes=max_nodes):
        term = path.weight(diagram, sem)
        if not standardized and not path.has_bidirected:
            root = path.root
            if root_variances is None or root not in root_variances:
                raise GraphStructureError(
                    f"non-standardized mode requires a variance for path root {root!r}"
                )
            term *= root_variances[root]
        total += term
    return total


# ---------------------------------------------------------------------------
# d-separation


def d_separated(diagram, a, b, removed_edges=()):
    """Unconditional d-separation after deleting the given directed edges.

    Two nodes are d-separated when no unblocked path connects them, which
    for an empty conditioning set is equivalent to sharing no ancestor in
    the graph where each bidirected edge is replaced by a latent common
    parent.
    """
    diagram.index(a)
    diagram.index(b)
    removed = set(removed_edges)
    extra = removed - set(diagram.directed_edges)
    if extra:
        raise GraphStructureError(f"removed edges not in diagram: {sorted(extra)}")
    if a == b:
        return False

    parents = {n: set() for n in diagram.nodes}
    for s, t in diagram.directed_edges:
        if (s, t) not in removed:
            parents[t].add(s)
    for k, (u, v) in enumerate(diagram.bidirected_edges):
        latent = ("__latent__", k)
        parents[latent] = set()
        parents[u].add(latent)
        parents[v].add(latent)

    def ancestry(node):
        seen = {node}
        stack = [node]
        while stack:
            for parent in parents[stack.pop()]:
                if parent not in seen:
                    seen.add(parent)
                    stack.append(parent)
        return seen

    return not (ancestry(a) & ancestry(b))


# ---------------------------------------------------------------------------
# Instrumental sets


@dataclass
class InstrumentalSetResult:
    satisfied: bool
    failed_condition: int | None = None
    witness: tuple | None = None  # ordered (instrument, Path) pairs
    detail: str = ""

    def __bool__(self):
        return self.satisfied


def _suffix_points_to(path, position):
    """Whether the truncation of ``path`` from node ``position`` onwards
    points at that node (arrowhead on the suffix's first edge)."""
    if position == len(path.nodes) - 1:  # suffix is the endpoint itself
        return True
    return path.edges[position].arrow_at(path.nodes[position])


def _prefix_points_to(path, position):
    """Whether the truncation of ``path`` up to node ``position`` points at
    that node (arrowhead on the prefix's last edge)."""
    if position == 0:
        return True
    return path.edges[position - 1].arrow_at(path.nodes[position])


def _pair_ok(instrument_j, path_i, path_j):
    """Condition-3 compatibility of an earlier path with a later one."""
    if instrument_j in path_i.nodes:
        return False
    index_i = {node: k for k, node in enumerate(path_i.nodes)}
    for pos_j, node in enumerate(path_j.nodes):
        if node not in index_i:
            continue
        if node == path_i.nodes[-1] and node == path_j.nodes[-1]:
            continue  # shared outcome endpoint; both final edges point at it
        if not _suffix_points_to(path_i, index_i[node]):
            return False
        if not _prefix_points_to(path_j, pos_j):
            return False
    return True


def _perfect_matching_exists(candidates, n):
    """Bipartite matching test: candidates[i] = set of usable columns."""
    match = [-1] * n

    def augment(i, seen):
        for j in candidates[i]:
            if j in seen:
                continue
            seen.add(j)
            if match[j] == -1 or augment(match[j], seen):
                match[j] = i
                return True
        return False

    return all(augment(i, set()) for i in range(n))


def check_instrumental_set(
    diagram,
    instruments,
    exposures,
    outcome,
    max_nodes=20,
    max_set_size=8,
):
    """Check the graphical instrumental-set condition.

    Searches for an ordering of the instruments together with one unblocked
    path per instrument, each ending in a distinct exposure -> outcome edge,
    such that

    1. every instrument is a non-descendant of the outcome and owns such a
       path,
    2. every instrument is d-separated from the outcome once all
       exposure -> outcome edges are removed, and
    3. later instruments do not appear on earlier paths, and whenever two
       chosen paths share a variable V, the earlier path's tail (from V to
       the outcome) and the later path's head (up to V) both point at V.

    Returns an :class:`InstrumentalSetResult` carrying the witness pairs on
    success and the first violated condition otherwise.
    """
    instruments = list(instruments)
    exposures = list(exposures)
    diagram.index(outcome)
    for node in itertools.chain(instruments, exposures):
        diagram.index(node)
    if outcome in instruments or outcome in exposures:
        raise ValueError("outcome cannot appear among instruments or exposures")
    if len(set(instruments)) != len(instruments):
        raise ValueError("duplicate instruments")
    if len(set(exposures)) != len(exposures):
        raise ValueError("duplicate exposures")
    if set(instruments) & set(exposures):
        raise ValueError("instruments and exposures must be disjoint")
    if len(instruments) != len(exposures):
        raise ValueError(
            "need exactly one instrument per exposure; pre-select a square "
            "subset (see find_instrumental_subset)"
        )
    K = len(exposures)
    if K > max_set_size:
        raise CombinatorialLimitError(
            f"instrumental-set search over {K}! orderings not supported "
            f"(max_set_size={max_set_size})"
        )

    # Condition 1: non-descendance plus existence of a compatible path
    # assignment (instrument -> exposure edge) in the bipartite sense.
    outcome_descendants = diagram.descendants(outcome)
    exposure_edges = {
        x: (x, outcome) for x in exposures if diagram.has_directed(x, outcome)
    }
    candidate_paths = {}
    for e in instruments:
        if e in outcome_descendants:
            return InstrumentalSetResult(
                False, 1, None, f"instrument {e!r} is a descendant of {outcome!r}"
            )
        per_exposure = {x: [] for x in exposures}
        for path in enumerate_paths(diagram, e, outcome, max_nodes=max_nodes):
            final = path.final_directed_edge()
            if final is None:
                continue
            x = final[0]
            if x in exposure_edges:
                per_exposure[x].append(path)
        candidate_paths[e] = per_exposure

    usable = [
        {j for j, x in enumerate(exposures) if candidate_paths[e][x]}
        for e in instruments
    ]
    if not _perfect_matching_exists(usable, K):
        return InstrumentalSetResult(
            False,
            1,
            None,
            "no assignment of unblocked instrument-outcome paths covers "
            "every exposure edge",
        )

    # Condition 2: d-separation once all exposure -> outcome edges go.
    removed = [exposure_edges[x] for x in exposure_edges]
    for e in instruments:
        if not d_separated(diagram, e, outcome, removed):
            return InstrumentalSetResult(
                False,
                2,
                None,
                f"instrument {e!r} stays d-connected to {outcome!r} after "
                "removing all exposure edges",
            )

    # Condition 3: ordered witness search with pairwise path compatibility.
    def search(remaining_instruments, remaining_exposures, chosen):
        if not remaining_instruments:
            return list(chosen)
        for e in remaining_instruments:
            for x in remaining_exposures:
                for path in candidate_paths[e][x]:
                    if any(
                        not _pair_ok(e, earlier_path, path)
                        for _, earlier_path in chosen
                    ):
                        continue
                    chosen.append((e, path))
                    found = search(
                        [i for i in remaining_instruments if i != e],
                        [j for j in remaining_exposures if j != x],
                        chosen,
                    )
                    if found is not None:
                        return found
                    chosen.pop()
        return None

    witness = search(list(instruments), list(exposures), [])
    if witness is None:
        return InstrumentalSetResult(
            False,
            3,
            None,
            "no instrument ordering and path choice satisfies the pairwise "
            "common-variable rule",
        )
    return InstrumentalSetResult(True, None, tuple(witness), "instrumental set")


def find_instrumental_subset(diagram, candidates, exposures, outcome, **kwargs):
    """First square subset of ``candidates`` forming an instrumental set.

    Returns ``(subset, result)``; ``subset`` is ``None`` when no subset of
    size ``len(exposures)`` qualifies, in which case ``result`` is the
    verdict for the last subset tried.
    """
    K = len(list(exposures))
    last = None
    for subset in itertools.combinations(candidates, K):
        last = check_instrumental_set(diagram, subset, exposures, outcome, **kwargs)
        if last.satisfied:
            return list(subset), last
    return None, last


# ---------------------------------------------------------------------------
# Diagram text format


def parse_diagram_text(text):
    """Parse the one-declaration-per-line diagram format.

    Recognised lines (``#`` starts a comment)::

        edge A -> B 0.4      # directed edge with coefficient
        bicov A <-> B 0.25   # bidirected edge with error covariance
        var A 0.8            # error variance (default 1.0)

    Duplicate declarations are rejected.  Returns ``(diagram, sem)``.
    """
    nodes = []
    seen_nodes = set()
    coefficients = {}
    bicovs = {}
    variances = {}

    def register(name):
        if name not in seen_nodes:
            seen_nodes.add(name)
            nodes.append(name)

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == "edge" and len(parts) == 5 and parts[2] == "->":
                key = (parts[1], parts[3])
                if key in coefficients:
                    raise GraphStructureError(f"duplicate edge declaration {key}")
                coefficients[key] = float(parts[4])
                register(parts[1])
                register(parts[3])
            elif parts[0] == "bicov" and len(parts) == 5 and parts[2] == "<->":
                key = _normalize_pair(parts[1], parts[3])
                if key in bicovs:
                    raise GraphStructureError(f"duplicate bicov declaration {key}")
                bicovs[key] = float(parts[4])
                register(parts[1])
                register(parts[3])
            elif parts[0] == "var" and len(parts) == 3:
                if parts[1] in variances:
                    raise GraphStructureError(
                        f"duplicate var declaration for {parts[1]!r}"
                    )
                variances[parts[1]] = float(parts[2])
                register(parts[1])
            else:
                raise GraphStructureError(f"unrecognised declaration: {line!r}")
        except ValueError as exc:
            raise GraphStructureError(f"line {lineno}: {exc}") from None

    diagram = CausalDiagram(nodes, list(coefficients), list(bicovs))
    sem = sem_from_values(diagram, coefficients, bicovs, variances)
    return diagram, sem
