"""Variable orders: rooted trees that drive factorized evaluation.

A variable order places every attribute of the joined schema at a node of a
rooted tree, subject to the rule that all attributes of any one relation lie
on a single root-to-leaf path. Each Variable node carries a key: the set of
ancestors its subtree depends on. Subtrees hanging off different children are
independent given the keys, which is what lets aggregates be computed once per
key group instead of once per join row.

Orders come in two flavours here: a core order of Variable nodes only, and an
extended order where every relation is attached as a RelationLeaf under the
lowest of its attributes and a synthetic intercept node is grafted on as the
root. Evaluation always runs on extended orders.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Iterator, Mapping, Sequence

from .storage import AttributeKind, Database


class OrderError(ValueError):
    pass


class NodeClass(enum.Enum):
    INTERCEPT = "intercept"
    VARIABLE = "variable"
    RELATION_LEAF = "relation_leaf"


@dataclass(frozen=True)
class VariableNode:
    """A node of a variable order. Immutable after construction.

    `key` is ordered as declared; containment checks treat it as a set. For a
    RelationLeaf the name is the relation's name and the key lists exactly the
    relation's attributes.
    """

    name: str
    key: tuple[str, ...] = ()
    categorical: bool = False
    children: tuple["VariableNode", ...] = ()
    node_class: NodeClass = NodeClass.VARIABLE

    def __post_init__(self) -> None:
        if len(set(self.key)) != len(self.key):
            raise OrderError(f"node {self.name}: duplicate names in key {self.key}")
        if self.node_class is NodeClass.RELATION_LEAF and self.children:
            raise OrderError(f"relation leaf {self.name} cannot have children")

    @property
    def key_set(self) -> frozenset[str]:
        return frozenset(self.key)


def variable(
    name: str,
    key: Sequence[str] = (),
    children: Sequence[VariableNode] = (),
    categorical: bool = False,
) -> VariableNode:
    return VariableNode(name, tuple(key), categorical, tuple(children), NodeClass.VARIABLE)


def relation_leaf(name: str, key: Sequence[str]) -> VariableNode:
    return VariableNode(name, tuple(key), False, (), NodeClass.RELATION_LEAF)


def intercept_root(name: str, children: Sequence[VariableNode]) -> VariableNode:
    return VariableNode(name, (), False, tuple(children), NodeClass.INTERCEPT)


def iter_nodes(root: VariableNode) -> Iterator[VariableNode]:
    """Pre-order traversal preserving child order."""
    stack = [root]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(node.children))


def iter_post_order(root: VariableNode) -> Iterator[VariableNode]:
    out: list[VariableNode] = []

    def rec(n: VariableNode) -> None:
        for c in n.children:
            rec(c)
        out.append(n)

    rec(root)
    return iter(out)


def find_leaves(root: VariableNode) -> list[VariableNode]:
    """RelationLeaf nodes in depth-first, child-order-preserving sequence."""
    return [n for n in iter_nodes(root) if n.node_class is NodeClass.RELATION_LEAF]


def node_by_name(root: VariableNode, name: str) -> VariableNode | None:
    for n in iter_nodes(root):
        if n.name == name:
            return n
    return None


def parent_map(root: VariableNode) -> dict[str, VariableNode | None]:
    parents: dict[str, VariableNode | None] = {root.name: None}
    for n in iter_nodes(root):
        for c in n.children:
            parents[c.name] = n
    return parents


def ancestor_map(root: VariableNode) -> dict[str, tuple[str, ...]]:
    """Node name -> names of strict ancestors, root first."""
    out: dict[str, tuple[str, ...]] = {}

    def rec(n: VariableNode, above: tuple[str, ...]) -> None:
        out[n.name] = above
        for c in n.children:
            rec(c, above + (n.name,))

    rec(root, ())
    return out


def _variable_names(root: VariableNode) -> dict[str, VariableNode]:
    return {
        n.name: n
        for n in iter_nodes(root)
        if n.node_class is NodeClass.VARIABLE
    }


def _chain_check(attrs: Sequence[str], anc: Mapping[str, tuple[str, ...]]) -> bool:
    """True when the attributes lie on one root-to-leaf path."""
    # On one path, for any two attributes one is an ancestor of the other.
    for a in attrs:
        for b in attrs:
            if a == b:
                continue
            if a not in anc[b] and b not in anc[a]:
                return False
    return True


def validate(order: VariableNode, db: Database) -> list[str]:
    """Check structural invariants; returns human-readable violations.

    Works for both core orders (Variables only: every relation of the catalog
    is checked for the one-path rule) and extended orders (only relations that
    appear as leaves are checked, since scaling may leave originals alongside
    their converted copies in the catalog).
    """
    violations: list[str] = []
    nodes = list(iter_nodes(order))

    seen: set[str] = set()
    for n in nodes:
        if n.name in seen:
            violations.append(f"duplicate node name {n.name}")
        seen.add(n.name)

    for n in nodes:
        if n.node_class is NodeClass.INTERCEPT:
            if n is not order:
                violations.append(f"intercept node {n.name} below the root")
            if n.key:
                violations.append(f"intercept {n.name} must have an empty key")

    anc = ancestor_map(order)
    parents = parent_map(order)
    extended = order.node_class is NodeClass.INTERCEPT or find_leaves(order)

    for n in nodes:
        if n.node_class is not NodeClass.VARIABLE:
            continue
        parent = parents[n.name]
        if parent is None or parent.node_class is NodeClass.INTERCEPT:
            if n.key:
                violations.append(
                    f"root variable {n.name} must have an empty key, has {n.key}"
                )
            continue
        allowed = parent.key_set | {parent.name}
        if not n.key_set <= allowed:
            violations.append(
                f"key of {n.name} {sorted(n.key_set)} not contained in "
                f"key({parent.name}) + {{{parent.name}}}"
            )
        if parent.name not in n.key_set:
            violations.append(f"key of {n.name} does not contain its parent {parent.name}")

    var_nodes = _variable_names(order)
    for k_name in set().union(*[n.key_set for n in nodes]) if nodes else set():
        if k_name not in var_nodes:
            violations.append(f"key references unknown variable {k_name}")
    for n in nodes:
        for k_name in n.key:
            if k_name in var_nodes and k_name not in anc[n.name]:
                violations.append(f"key of {n.name} references non-ancestor {k_name}")

    def check_relation(rname: str) -> None:
        rel = db[rname]
        missing = [a for a in rel.attributes if a not in var_nodes]
        if missing:
            violations.append(
                f"relation {rname}: attributes {missing} missing from the order"
            )
            return
        if not _chain_check(rel.attributes, anc):
            violations.append(
                f"relation {rname}: attributes {list(rel.attributes)} "
                f"do not lie on one root-to-leaf path"
            )

    if extended:
        for leaf in find_leaves(order):
            if leaf.name not in db:
                violations.append(f"leaf references unknown relation {leaf.name}")
                continue
            rel = db[leaf.name]
            if set(leaf.key) != set(rel.attributes):
                violations.append(
                    f"leaf {leaf.name}: key {sorted(leaf.key)} != relation "
                    f"attributes {sorted(rel.attributes)}"
                )
            check_relation(leaf.name)
            parent = parents[leaf.name]
            if parent is None or parent.node_class is not NodeClass.VARIABLE:
                violations.append(f"leaf {leaf.name} must hang below a variable")
                continue
            if all(a in var_nodes for a in rel.attributes):
                # lowest attribute: every other attribute is its ancestor
                path_attrs = set(rel.attributes)
                others = path_attrs - {parent.name}
                if parent.name not in path_attrs or not all(
                    a in anc[parent.name] for a in others
                ):
                    violations.append(
                        f"leaf {leaf.name} not attached under the lowest of "
                        f"its attributes (found under {parent.name})"
                    )
            if not leaf.key_set <= parent.key_set | {parent.name}:
                violations.append(
                    f"leaf {leaf.name}: key exceeds key({parent.name}) + "
                    f"{{{parent.name}}}; the order's keys miss a dependency"
                )
    else:
        for rname in db.names():
            check_relation(rname)

    return violations


def extend(
    core: VariableNode | Sequence[VariableNode],
    db: Database,
    intercept_name: str = "T",
) -> VariableNode:
    """Attach every relation of the catalog as a leaf and graft the intercept.

    Each relation hangs under the lowest of its attributes, keyed by exactly
    its attribute set. A forest (sequence of roots) is adopted whole: all
    former roots become children of the new intercept root.
    """
    roots = list(core) if isinstance(core, Sequence) else [core]
    names: set[str] = set()
    for r in roots:
        for n in iter_nodes(r):
            names.add(n.name)
    if intercept_name in names:
        raise OrderError(f"intercept name {intercept_name} collides with a variable")
    for rname in db.names():
        if rname in names:
            raise OrderError(f"relation name {rname} collides with a variable")

    # relation -> name of the variable to attach under
    attach: dict[str, list[str]] = {}
    for ri, root in enumerate(roots):
        anc = ancestor_map(root)
        var_nodes = _variable_names(root)
        for rname in db.names():
            rel = db[rname]
            if not rel.attributes:
                raise OrderError(f"relation {rname} has no attributes")
            if not all(a in var_nodes for a in rel.attributes):
                continue
            if not _chain_check(rel.attributes, anc):
                raise OrderError(
                    f"relation {rname}: attributes not on one root-to-leaf path"
                )
            lowest = max(rel.attributes, key=lambda a: len(anc[a]))
            attach.setdefault(lowest, []).append(rname)

    covered = {r for rs in attach.values() for r in rs}
    missing = [r for r in db.names() if r not in covered]
    if missing:
        raise OrderError(f"relations {missing} have attributes outside the order")

    def rebuild(n: VariableNode) -> VariableNode:
        children = [rebuild(c) for c in n.children]
        for rname in attach.get(n.name, ()):
            children.append(relation_leaf(rname, db[rname].attributes))
        return replace(n, children=tuple(children))

    return intercept_root(intercept_name, [rebuild(r) for r in roots])


def rename_leaves(root: VariableNode, mapping: Mapping[str, str]) -> VariableNode:
    """New tree with RelationLeaf names substituted (keys are attribute names
    and stay unchanged)."""

    def rec(n: VariableNode) -> VariableNode:
        if n.node_class is NodeClass.RELATION_LEAF and n.name in mapping:
            return replace(n, name=mapping[n.name])
        if not n.children:
            return n
        return replace(n, children=tuple(rec(c) for c in n.children))

    return rec(root)


def derive_keys(root: VariableNode, db: Database) -> VariableNode:
    """Fill each Variable's key with the ancestors its subtree depends on.

    A subtree depends on an ancestor when some relation mentions both the
    ancestor and an attribute inside the subtree. This is the minimal key
    assignment under which factorized evaluation is exact; explicit keys in
    hand-written orders are validated against containment instead.
    """
    anc = ancestor_map(root)

    def subtree_attrs(n: VariableNode) -> set[str]:
        out = set()
        for m in iter_nodes(n):
            if m.node_class is NodeClass.VARIABLE:
                out.add(m.name)
        return out

    def rec(n: VariableNode) -> VariableNode:
        children = tuple(rec(c) for c in n.children)
        if n.node_class is not NodeClass.VARIABLE:
            return replace(n, children=children)
        below = subtree_attrs(n)
        needed: set[str] = set()
        for rname in db.names():
            attrs = set(db[rname].attributes)
            if attrs & below:
                needed |= attrs
        key = tuple(a for a in anc[n.name] if a in needed)
        return replace(n, key=key, children=children)

    return rec(root)


@dataclass(frozen=True)
class FeatureOrder:
    """Column convention for the cofactor matrix and the model vector.

    entries[0] is the label, entries[-1] the intercept, everything between a
    feature. The label's coefficient is pinned to -1 by the trainer.
    """

    entries: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.entries) < 2:
            raise OrderError("feature order needs at least label and intercept")
        if len(set(self.entries)) != len(self.entries):
            raise OrderError(f"feature order has duplicates: {self.entries}")

    @property
    def label(self) -> str:
        return self.entries[0]

    @property
    def features(self) -> tuple[str, ...]:
        return self.entries[1:-1]

    @property
    def intercept(self) -> str:
        return self.entries[-1]

    @property
    def n(self) -> int:
        """Index of the intercept column; the matrix is (n+1) x (n+1)."""
        return len(self.entries) - 1

    def index(self, name: str) -> int:
        return self.entries.index(name)


def validate_feature_order(fo: FeatureOrder, order: VariableNode) -> list[str]:
    violations: list[str] = []
    var_nodes = _variable_names(order)
    if order.node_class is NodeClass.INTERCEPT and fo.intercept != order.name:
        violations.append(
            f"intercept entry {fo.intercept} does not name the root {order.name}"
        )
    for name in (fo.label, *fo.features):
        node = var_nodes.get(name)
        if node is None:
            violations.append(f"feature-order entry {name} is not a variable")
        elif node.categorical:
            violations.append(f"categorical variable {name} cannot be a matrix column")
    return violations
