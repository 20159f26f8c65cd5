"""Weighted prefix tree over tokenized phrases, with failure links.

The tree is a token-level trie in which every arc carries a positive
score. In the default "depth_scaled" mode the score of the arc entering
a node at depth d is

    c0                  for d == 1
    c0 * beta + ln(d)   for d >= 2

so deeper transitions pay out progressively more, which lets a single
greedy hypothesis climb the tree against competing tokens. The
"uniform" mode scores every arc c0 and adds an optional bonus on the
arc entering each phrase-final node, mirroring trie-boosting schemes
that reward only at the end of a phrase.

Failure links follow the Aho-Corasick construction: fail(n) is the node
whose token string is the longest proper suffix of n's string that is
present in the tree (the root if none). They are the backoff targets of
the compiled arc table.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

from .context import ContextList, Vocabulary

WEIGHT_DEPTH_SCALED = "depth_scaled"
WEIGHT_UNIFORM = "uniform"
WEIGHT_MODES = (WEIGHT_DEPTH_SCALED, WEIGHT_UNIFORM)


@dataclass(frozen=True)
class TreeParams:
    """Scoring parameters for tree construction."""

    c0: float = 1.0
    beta: float = 2.0
    weight_mode: str = WEIGHT_DEPTH_SCALED
    uniform_final_bonus: float = 0.0

    def __post_init__(self):
        if self.c0 < 0:
            raise ValueError(f"c0 must be >= 0, got {self.c0}")
        if self.beta < 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if self.weight_mode not in WEIGHT_MODES:
            raise ValueError(f"weight_mode must be one of {WEIGHT_MODES}, got {self.weight_mode!r}")


def arc_score(depth: int, params: TreeParams) -> float:
    """Score of an arc whose child node sits at `depth` (root = 0)."""
    if depth < 1:
        raise ValueError(f"arc depth must be >= 1, got {depth}")
    if params.weight_mode == WEIGHT_UNIFORM:
        return params.c0
    if depth == 1:
        return params.c0
    return params.c0 * params.beta + math.log(depth)


@dataclass
class TreeNode:
    id: int
    depth: int
    parent: int
    in_token: int | None
    # token id -> (child node id, arc score)
    arcs: dict[int, tuple[int, float]] = field(default_factory=dict)
    acc_score: float = 0.0
    is_final: bool = False
    fail: int | None = None


@dataclass
class PrefixTree:
    """Immutable-after-build phrase trie; node 0 is the root."""

    nodes: list[TreeNode]
    params: TreeParams
    vocab_size: int

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @property
    def num_finals(self) -> int:
        return sum(1 for n in self.nodes if n.is_final)

    @property
    def max_depth(self) -> int:
        return max(n.depth for n in self.nodes)

    @property
    def has_fail_links(self) -> bool:
        return all(n.fail is not None for n in self.nodes)

    def arc_score_of(self, node_id: int) -> float:
        """Score of the arc entering `node_id` (0.0 for the root)."""
        node = self.nodes[node_id]
        if node.parent < 0:
            return 0.0
        return self.nodes[node.parent].arcs[node.in_token][1]

    def node_string(self, node_id: int, vocab: Vocabulary | None = None) -> str:
        """Token string on the root path, for dumps and debugging."""
        ids: list[int] = []
        cur = self.nodes[node_id]
        while cur.parent >= 0:
            ids.append(cur.in_token)
            cur = self.nodes[cur.parent]
        ids.reverse()
        if vocab is not None:
            return "".join(vocab.tokens[i] for i in ids)
        return ",".join(str(i) for i in ids)

    def bfs_order(self) -> list[int]:
        """Node ids in breadth-first order, children by token id."""
        order = [0]
        queue = deque([0])
        while queue:
            nid = queue.popleft()
            for token in sorted(self.nodes[nid].arcs):
                child = self.nodes[nid].arcs[token][0]
                order.append(child)
                queue.append(child)
        return order

    def dump(self, vocab: Vocabulary | None = None) -> str:
        """Human-readable listing of every node, BFS order."""
        lines = []
        for nid in self.bfs_order():
            n = self.nodes[nid]
            lines.append(
                f"{nid}\t'{self.node_string(nid, vocab)}'\tdepth={n.depth}"
                f"\tarc={self.arc_score_of(nid):.6f}\tacc={n.acc_score:.6f}"
                f"\tfinal={'T' if n.is_final else 'F'}\tfail={n.fail}"
            )
        return "\n".join(lines) + "\n"


def build_prefix_tree(ctx: ContextList, params: TreeParams, vocab_size: int) -> PrefixTree:
    """Insert every phrase into a trie and assign arc/accumulated scores.

    Scores are assigned in a pass over the finished structure, so the
    result does not depend on phrase insertion order (relevant for the
    uniform final bonus when one phrase is a prefix of another).
    Failure links are left unset; see compute_fail_links.
    """
    root = TreeNode(id=0, depth=0, parent=-1, in_token=None)
    nodes = [root]
    for phrase in ctx.phrases:
        if not phrase.token_ids:
            raise ValueError(f"empty phrase {phrase.text!r}")
        cur = root
        for token in phrase.token_ids:
            if not 0 <= token < vocab_size:
                raise ValueError(
                    f"phrase {phrase.text!r}: token id {token} out of range for V={vocab_size}"
                )
            hit = cur.arcs.get(token)
            if hit is None:
                child = TreeNode(id=len(nodes), depth=cur.depth + 1, parent=cur.id, in_token=token)
                nodes.append(child)
                cur.arcs[token] = (child.id, 0.0)
            else:
                child = nodes[hit[0]]
            cur = child
        cur.is_final = True

    # Scores: base by depth, plus the uniform-mode bonus on final arcs.
    for node in nodes[1:]:
        score = arc_score(node.depth, params)
        if params.weight_mode == WEIGHT_UNIFORM and node.is_final:
            score += params.uniform_final_bonus
        parent = nodes[node.parent]
        parent.arcs[node.in_token] = (node.id, score)
    # Parents are created before children, so one ordered pass settles acc.
    for node in nodes[1:]:
        parent = nodes[node.parent]
        node.acc_score = parent.acc_score + parent.arcs[node.in_token][1]

    return PrefixTree(nodes=nodes, params=params, vocab_size=vocab_size)


def compute_fail_links(tree: PrefixTree) -> PrefixTree:
    """Set fail(n) to the longest proper suffix of n present in the tree.

    Standard breadth-first construction: depth-1 nodes fail to the root;
    deeper nodes follow the parent's fail chain looking for a node with a
    matching outgoing token.
    """
    nodes = tree.nodes
    nodes[0].fail = 0
    queue: deque[int] = deque()
    for token in sorted(nodes[0].arcs):
        child = nodes[0].arcs[token][0]
        nodes[child].fail = 0
        queue.append(child)
    while queue:
        nid = queue.popleft()
        node = nodes[nid]
        for token in sorted(node.arcs):
            child = node.arcs[token][0]
            f = node.fail
            while f != 0 and token not in nodes[f].arcs:
                f = nodes[f].fail
            hit = nodes[f].arcs.get(token)
            nodes[child].fail = hit[0] if hit is not None and hit[0] != child else 0
            queue.append(child)
    return tree
