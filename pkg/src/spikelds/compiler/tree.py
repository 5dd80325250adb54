"""Reduction trees for sums wider than one core."""

from __future__ import annotations

from dataclasses import dataclass
from math import ceil

from ..graph import ConfigurationError


@dataclass
class AdderTree:
    """Tree over ``n_leaves`` inputs.

    ``nodes[i]`` lists node i's children as ``("leaf", j)`` or
    ``("node", k)``; the root is the last node. Delays are in units of one
    tree level: ``edge_delay[(child, parent)]`` pads node-to-node edges that
    skip levels, and ``leaf_delay[j]`` pads leaves attached above the
    bottom level, so every leaf is exactly ``depth`` levels below the root
    output. With a single leaf there are no nodes and the tree is a
    pass-through.
    """

    n_leaves: int
    k: int
    nodes: list
    height: list
    edge_delay: dict
    leaf_delay: list
    leaf_node: list

    @property
    def n_internal(self) -> int:
        return len(self.nodes)

    @property
    def root(self) -> int | None:
        return len(self.nodes) - 1 if self.nodes else None

    @property
    def depth(self) -> int:
        return self.height[-1] if self.nodes else 0

    def leaf_latency(self, j: int) -> int:
        """Levels from leaf ``j`` to the root output, including padding."""
        if not self.nodes:
            return 0
        total = self.leaf_delay[j]
        node = self.leaf_node[j]
        parent = self._parents()
        while True:
            total += 1
            up = parent.get(node)
            if up is None:
                return total
            total += self.edge_delay[(node, up)]
            node = up

    def _parents(self):
        out = {}
        for i, children in enumerate(self.nodes):
            for kind, c in children:
                if kind == "node":
                    out[c] = i
        return out


def _grow(costs, k, node_cost):
    """Level-by-level greedy grouping. ``costs`` are leaf slot costs."""
    items = [("leaf", j, c) for j, c in enumerate(costs)]
    nodes = []
    while sum(c for *_, c in items) > k:
        nxt, group, used = [], [], 0
        for it in items:
            if used + it[2] > k:
                if len(group) >= 2:
                    nodes.append([(kind, idx) for kind, idx, _ in group])
                    nxt.append(("node", len(nodes) - 1, node_cost))
                    group, used = [], 0
                else:
                    nxt.extend(group)
                    group, used = [], 0
            group.append(it)
            used += it[2]
        if used == k and len(group) >= 2:
            nodes.append([(kind, idx) for kind, idx, _ in group])
            nxt.append(("node", len(nodes) - 1, node_cost))
        else:
            nxt.extend(group)
        if len(nxt) == len(items):
            raise ConfigurationError(f"fan-in {k} too small to reduce the tree")
        items = nxt
    if len(items) > 1 or items[0][0] == "leaf":
        nodes.append([(kind, idx) for kind, idx, _ in items])
    return nodes


def _finish(n_leaves, k, nodes):
    height = []
    for children in nodes:
        h = 0
        for kind, c in children:
            h = max(h, 0 if kind == "leaf" else height[c])
        height.append(h + 1)
    edge_delay, leaf_delay, leaf_node = {}, [0] * n_leaves, [None] * n_leaves
    for i, children in enumerate(nodes):
        for kind, c in children:
            if kind == "leaf":
                leaf_delay[c] = height[i] - 1
                leaf_node[c] = i
            else:
                edge_delay[(c, i)] = height[i] - 1 - height[c]
    return AdderTree(n_leaves, k, nodes, height, edge_delay, leaf_delay, leaf_node)


def build_adder_tree(n: int, k: int) -> AdderTree:
    """Greedy k-ary tree with ceil((n-1)/(k-1)) internal nodes.

    Each level groups as many full k-tuples as it can and carries the
    remainder upward, so only the root may be partly filled.
    """
    if n < 1 or k < 2:
        raise ConfigurationError("adder tree needs n >= 1 and k >= 2")
    if n == 1:
        return AdderTree(1, k, [], [], {}, [0], [None])
    nodes = _grow([1] * n, k, 1)
    tree = _finish(n, k, nodes)
    assert tree.n_internal == ceil((n - 1) / (k - 1))
    return tree


def build_cancel_tree(n: int, k: int) -> AdderTree:
    """Tree of cancellation nodes; an inner node's output occupies two input slots."""
    if n < 1 or k < 4:
        raise ConfigurationError("cancellation tree needs n >= 1 and fan-in k >= 4")
    nodes = _grow([1] * n, k, 2)
    return _finish(n, k, nodes)
