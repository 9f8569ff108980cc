"""Causal graphs, unfair pathway sets and the recanting-witness check."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping

import networkx as nx

# Role tags
SENSITIVE = "sensitive"
OUTCOME = "outcome"
FEATURE = "feature"
LATENT = "latent"
ROLES = (SENSITIVE, OUTCOME, FEATURE, LATENT)

Path = tuple[str, ...]


class GraphValidationError(ValueError):
    """Raised when a graph or pathway set violates its invariants."""

    def __init__(self, issues):
        self.issues = list(issues)
        super().__init__("; ".join(self.issues))


class RecantingWitnessError(ValueError):
    """Raised when unfair pathways admit a recanting witness."""

    def __init__(self, witness):
        self.witness = witness
        super().__init__(
            f"Unfair pathways satisfy the recanting witness criterion with witness '{witness}'"
        )


@dataclass(frozen=True)
class CausalGraph:
    """
    DAG of named nodes with role tags.

    Node order is the declaration order and is reused wherever a
    deterministic ordering is needed (feature columns, topological ties).
    """
    roles: tuple[tuple[str, str], ...]
    edges: tuple[tuple[str, str], ...]

    @classmethod
    def from_roles(cls, roles: Mapping[str, str], edges: Iterable[Iterable[str]]) -> "CausalGraph":
        return cls(
            roles=tuple((str(n), str(r)) for n, r in roles.items()),
            edges=tuple((str(p), str(c)) for p, c in edges),
        )

    @cached_property
    def nodes(self) -> tuple[str, ...]:
        return tuple(name for name, _role in self.roles)

    @cached_property
    def _role_map(self) -> dict[str, str]:
        return dict(self.roles)

    def role(self, node: str) -> str:
        return self._role_map[node]

    def has_node(self, node: str) -> bool:
        return node in self._role_map

    def nodes_with_role(self, role: str) -> list[str]:
        return [n for n, r in self.roles if r == role]

    @property
    def sensitive(self) -> str:
        found = self.nodes_with_role(SENSITIVE)
        if len(found) != 1:
            raise GraphValidationError([f"expected exactly one sensitive node, found {found}"])
        return found[0]

    @property
    def outcome(self) -> str:
        found = self.nodes_with_role(OUTCOME)
        if len(found) != 1:
            raise GraphValidationError([f"expected exactly one outcome node, found {found}"])
        return found[0]

    @cached_property
    def latent(self) -> tuple[str, ...]:
        return tuple(self.nodes_with_role(LATENT))

    @cached_property
    def features(self) -> tuple[str, ...]:
        """Observed classifier inputs: every non-latent, non-outcome node (A included)."""
        return tuple(n for n, r in self.roles if r in (SENSITIVE, FEATURE))

    @cached_property
    def digraph(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(self.nodes)
        g.add_edges_from(self.edges)
        return g

    def parents(self, node: str) -> list[str]:
        if not self.has_node(node):
            raise KeyError(f"Node {node} not in graph")
        preds = set(self.digraph.predecessors(node))
        return [n for n in self.nodes if n in preds]

    def descendants(self, node: str) -> set[str]:
        return nx.descendants(self.digraph, node)

    def ancestors(self, node: str) -> set[str]:
        return nx.ancestors(self.digraph, node)

    def topological_order(self) -> list[str]:
        """Topological order, ties broken by declaration order."""
        position = {n: i for i, n in enumerate(self.nodes)}
        return list(nx.lexicographical_topological_sort(self.digraph, key=position.__getitem__))


@dataclass(frozen=True)
class PathwaySet:
    """Unfair pathways π: full directed paths from A to Y."""
    paths: tuple[Path, ...]

    @classmethod
    def of(cls, paths: Iterable[Iterable[str]]) -> "PathwaySet":
        unique = []
        for p in paths:
            p = tuple(p)
            if p not in unique:
                unique.append(p)
        return cls(tuple(unique))

    @cached_property
    def edges(self) -> frozenset[tuple[str, str]]:
        return frozenset((p[i], p[i + 1]) for p in self.paths for i in range(len(p) - 1))

    @cached_property
    def nodes(self) -> frozenset[str]:
        return frozenset(n for p in self.paths for n in p)

    def suffixes_from(self, node: str) -> set[Path]:
        """Segments node→…→Y of π paths passing through node."""
        return {p[p.index(node):] for p in self.paths if node in p}

    def __len__(self):
        return len(self.paths)

    def __str__(self):
        return "{" + ", ".join("→".join(p) for p in self.paths) + "}"


@dataclass(frozen=True)
class ParentPartition:
    node: str
    on_path: frozenset[str]
    off_path: frozenset[str]


def validate_graph(graph: CausalGraph, columns: Iterable[str] | None = None) -> list[str]:
    """
    Check every CausalGraph invariant.

    Args:
        graph: Graph to check
        columns: Optional observed data columns; latent nodes must not appear in them

    Returns:
        List of issues (empty list means the graph is valid)
    """
    issues = []

    names = [n for n, _r in graph.roles]
    duplicates = sorted({n for n in names if names.count(n) > 1})
    if duplicates:
        issues.append(f"Duplicate node names: {duplicates}")

    for node, role in graph.roles:
        if role not in ROLES:
            issues.append(f"Node '{node}' has unknown role '{role}'. Must be one of {list(ROLES)}.")

    known = set(names)
    for parent, child in graph.edges:
        if parent not in known or child not in known:
            issues.append(f"Edge {parent}→{child} references an unknown node.")
        if parent == child:
            issues.append(f"Edge {parent}→{child} is a self-loop.")

    if not nx.is_directed_acyclic_graph(graph.digraph):
        cycle = nx.find_cycle(graph.digraph)
        issues.append("Cycle detected: " + " → ".join(p for p, _c in cycle) + f" → {cycle[0][0]}")

    for role, label in ((SENSITIVE, "sensitive"), (OUTCOME, "outcome")):
        tagged = graph.nodes_with_role(role)
        if not tagged:
            issues.append(f"Missing {label} node.")
        elif len(tagged) > 1:
            issues.append(f"Duplicate {label} nodes: {tagged}")

    if columns is not None:
        columns = set(columns)
        for node in graph.latent:
            if node in columns:
                issues.append(f"Latent node '{node}' has an observed data column.")

    return issues


def validate_pathways(graph: CausalGraph, pi: PathwaySet) -> list[str]:
    """Check that every path runs A→…→Y along graph edges and avoids latent nodes."""
    issues = []
    a, y = graph.sensitive, graph.outcome
    edge_set = set(graph.edges)
    latent = set(graph.latent)

    if not pi.paths:
        issues.append("Pathway set is empty.")
    for path in pi.paths:
        label = "→".join(path)
        if len(path) < 2:
            issues.append(f"Pathway '{label}' has fewer than two nodes.")
            continue
        if path[0] != a:
            issues.append(f"Pathway '{label}' does not start at sensitive node '{a}'.")
        if path[-1] != y:
            issues.append(f"Pathway '{label}' does not end at outcome node '{y}'.")
        for parent, child in zip(path, path[1:]):
            if (parent, child) not in edge_set:
                issues.append(f"Pathway '{label}' uses {parent}→{child}, which is not an edge.")
        through_latent = [n for n in path if n in latent]
        if through_latent:
            issues.append(f"Pathway '{label}' passes through latent node(s) {through_latent}.")
    return issues


def enumerate_paths(graph: CausalGraph, src: str, dst: str) -> list[Path]:
    """
    All directed paths src→…→dst, each exactly once, in sorted order.

    Returns:
        List of node tuples (empty when no path exists)
    """
    for node in (src, dst):
        if not graph.has_node(node):
            raise KeyError(f"Node {node} not in graph")
    if src == dst:
        return []
    return sorted(tuple(p) for p in nx.all_simple_paths(graph.digraph, src, dst))


def expand_pathways(graph: CausalGraph, direct: bool = True, through: Iterable[str] = ()) -> PathwaySet:
    """
    Shorthand for π: the direct edge A→Y plus every A→…→Y path through the given nodes.
    """
    a, y = graph.sensitive, graph.outcome
    through = set(through)
    selected = []
    for path in enumerate_paths(graph, a, y):
        if direct and path == (a, y):
            selected.append(path)
        elif through & set(path[1:-1]):
            selected.append(path)
    return PathwaySet.of(selected)


def partition_parents(graph: CausalGraph, pi: PathwaySet, node: str) -> ParentPartition:
    """
    Split pa(node) into parents joined to node by an edge of some π path and the rest.
    """
    parents = graph.parents(node)
    on_path = frozenset(p for p in parents if (p, node) in pi.edges)
    return ParentPartition(node=node, on_path=on_path, off_path=frozenset(parents) - on_path)


def check_recanting_witness(graph: CausalGraph, pi: PathwaySet) -> str | None:
    """
    Find a recanting witness for π, if any.

    A node Z is a witness when a π path reaches it from A, a π path leaves it
    towards Y, and some other Z→…→Y path of the graph is not part of π.

    Returns:
        The first witness in declaration order, or None
    """
    a, y = graph.sensitive, graph.outcome
    for z in graph.nodes:
        if z in (a, y) or z not in pi.nodes:
            continue
        in_pi = pi.suffixes_from(z)
        if not in_pi:
            continue
        for path in enumerate_paths(graph, z, y):
            if path not in in_pi:
                return z
    return None


def require_admissible(graph: CausalGraph, pi: PathwaySet) -> None:
    """Raise unless the graph and π are valid and π has no recanting witness."""
    issues = validate_graph(graph)
    if not issues:
        issues = validate_pathways(graph, pi)
    if issues:
        raise GraphValidationError(issues)
    witness = check_recanting_witness(graph, pi)
    if witness is not None:
        raise RecantingWitnessError(witness)


def graph_to_dict(graph: CausalGraph, pi: PathwaySet | None = None) -> dict:
    """Versioned graph config; π is written as explicit pathways."""
    config = {
        "version": 1,
        "nodes": dict(graph.roles),
        "edges": [list(e) for e in graph.edges],
    }
    if pi is not None:
        config["pathways"] = [list(p) for p in pi.paths]
    return config


def graph_from_dict(config: Mapping) -> tuple[CausalGraph, PathwaySet | None]:
    """
    Parse a graph config.

    π may be given as explicit `pathways` or as the `unfair` shorthand
    {"direct": bool, "through": [...]}. Configs without either yield π = None.

    Raises:
        GraphValidationError: On an unsupported version or an invalid graph/π
    """
    if config.get("version") != 1:
        raise GraphValidationError([f"Unsupported graph config version {config.get('version')!r}"])
    graph = CausalGraph.from_roles(config["nodes"], config.get("edges", []))
    issues = validate_graph(graph)
    if issues:
        raise GraphValidationError(issues)

    pi = None
    if "pathways" in config:
        pi = PathwaySet.of(config["pathways"])
    elif "unfair" in config:
        shorthand = config["unfair"]
        pi = expand_pathways(graph, direct=shorthand.get("direct", True),
                             through=shorthand.get("through", ()))
    if pi is not None:
        issues = validate_pathways(graph, pi)
        if issues:
            raise GraphValidationError(issues)
    return graph, pi
