"""
Goal-graph validation and structural repair.
"""
from typing import Callable, Dict, List, Optional, Set, Tuple

import networkx as nx

from app.core.app_logging import integration_logger
from app.core.exceptions import TopologyError
from app.schemas.kaos import GoalEdge, GoalNode, KaosModel, TopologyReport
from app.schemas.requirement import KaosLevel
from app.utils.text_utils import tokenize


MAX_REPAIR_PASSES = 3

Scorer = Callable[[GoalNode, GoalNode], float]


def token_overlap(parent: GoalNode, child: GoalNode) -> float:
    """Jaccard overlap of goal texts."""
    a, b = set(tokenize(parent.text)), set(tokenize(child.text))
    if not a or not b:
        return 0.0
    return len(a & b) / len(a | b)


def build_graph(model: KaosModel) -> nx.DiGraph:
    """Directed parent-to-child graph over known nodes."""
    graph = nx.DiGraph()
    nodes = model.node_map()
    graph.add_nodes_from(nodes)
    for edge in model.edges:
        if edge.parent in nodes and edge.child in nodes:
            graph.add_edge(edge.parent, edge.child, similarity=edge.similarity)
    return graph


def validate_dag(model: KaosModel) -> TopologyReport:
    """Structural findings: cycles, level violations, orphans and dangling edges."""
    seen: Set[str] = set()
    duplicates: Set[str] = set()
    for node in model.nodes:
        if node.id in seen:
            duplicates.add(node.id)
        seen.add(node.id)

    nodes = model.node_map()
    unknown = [e for e in model.edges if e.parent not in nodes or e.child not in nodes]
    known_edges = [e for e in model.edges if e.parent in nodes and e.child in nodes]

    graph = build_graph(model)
    cycles = [
        sorted(component)
        for component in nx.strongly_connected_components(graph)
        if len(component) > 1
    ]
    cycles += [[u] for u, v in nx.selfloop_edges(graph)]
    cycles.sort()

    inversions = []
    skips = []
    for edge in known_edges:
        parent, child = nodes[edge.parent], nodes[edge.child]
        if parent.level.rank <= child.level.rank:
            inversions.append(edge)
        elif parent.level.rank - child.level.rank > 1:
            skips.append(edge)

    orphan_tactical = sorted(
        n.id for n in nodes.values()
        if n.level is KaosLevel.TACTICAL
        and not any(nodes[p].level is KaosLevel.STRATEGIC for p in graph.predecessors(n.id))
    )
    orphan_operational = sorted(
        n.id for n in nodes.values()
        if n.level is KaosLevel.OPERATIONAL
        and not any(nodes[a].level is KaosLevel.TACTICAL for a in nx.ancestors(graph, n.id))
    )

    return TopologyReport(
        cycles=cycles,
        level_inversions=sorted(inversions, key=lambda e: (e.parent, e.child)),
        level_skips=sorted(skips, key=lambda e: (e.parent, e.child)),
        orphan_operational=orphan_operational,
        orphan_tactical=orphan_tactical,
        unknown_endpoints=sorted(unknown, key=lambda e: (e.parent, e.child)),
        duplicate_nodes=sorted(duplicates),
    )


def _break_cycles(graph: nx.DiGraph) -> int:
    removed = 0
    while True:
        try:
            cycle = nx.find_cycle(graph)
        except nx.NetworkXNoCycle:
            return removed
        u, v = min(
            ((u, v) for u, v in cycle),
            key=lambda e: (graph.edges[e]["similarity"], e[0], e[1]),
        )
        graph.remove_edge(u, v)
        integration_logger.info(f"Removed cycle edge {u} -> {v}")
        removed += 1


def _best_parent(
    child: GoalNode,
    candidates: List[GoalNode],
    scorer: Scorer,
) -> Optional[Tuple[GoalNode, float]]:
    if not candidates:
        return None
    scored = [(min(1.0, max(0.0, float(scorer(c, child)))), c) for c in candidates]
    score, best = min(scored, key=lambda sc: (-sc[0], sc[1].id))
    return best, score


def _repair_pass(model: KaosModel, scorer: Scorer) -> KaosModel:
    nodes = model.node_map()
    graph = build_graph(model)

    _break_cycles(graph)

    for u, v in list(graph.edges):
        gap = nodes[u].level.rank - nodes[v].level.rank
        if gap != 1:
            graph.remove_edge(u, v)
            integration_logger.info(f"Removed {'inverted' if gap < 1 else 'level-skipping'} edge {u} -> {v}")

    by_level: Dict[KaosLevel, List[GoalNode]] = {level: [] for level in KaosLevel}
    for node in sorted(nodes.values(), key=lambda n: n.id):
        by_level[node.level].append(node)

    for node in by_level[KaosLevel.TACTICAL] + by_level[KaosLevel.OPERATIONAL]:
        parent_level = node.level.above()
        if parent_level is None:
            continue
        if any(nodes[p].level is parent_level for p in graph.predecessors(node.id)):
            continue
        choice = _best_parent(node, by_level[parent_level], scorer)
        if choice is None:
            continue
        parent, score = choice
        graph.add_edge(parent.id, node.id, similarity=score)
        integration_logger.info(f"Re-linked orphan {node.id} under {parent.id}")

    edges = [
        GoalEdge(parent=u, child=v, similarity=data["similarity"])
        for u, v, data in graph.edges(data=True)
    ]
    return KaosModel(nodes=list(model.nodes), edges=edges).canonical()


def repair(
    model: KaosModel,
    report: Optional[TopologyReport] = None,
    scorer: Scorer = token_overlap,
) -> KaosModel:
    """Edge-only repair; raises TopologyError if the model stays invalid."""
    report = report if report is not None else validate_dag(model)
    if report.is_empty:
        return model

    current = model
    for attempt in range(1, MAX_REPAIR_PASSES + 1):
        current = _repair_pass(current, scorer)
        report = validate_dag(current)
        if report.is_empty:
            integration_logger.info(f"Goal model repaired in {attempt} pass(es)")
            return current

    integration_logger.error(f"Goal model still invalid after {MAX_REPAIR_PASSES} repair passes: {report.summary()}")
    raise TopologyError(f"goal model irreparable: {report.summary()}", report=report)
