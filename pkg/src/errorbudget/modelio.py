"""JSON serialisation of budget model files.

A model file is a JSON document::

    {
      "root": <node>,
      "binding": {"groups": {<group name>: [<slot>, ...], ...}}
    }

    <node> = {
      "name": str,
      "kind": "composite" | "leaf",
      "self_error_group": str,            # optional tolerance slot
      "children": [                       # composite nodes only
        {"multiplicity": {"coefficient": float,
                          "exponent": float,          # optional, default 0
                          "rounding": "continuous" | "ceil"},  # optional
         "node": <node>},
        ...
      ],
      "leaf_cost": {"count": float,       # leaf nodes only
                    "gates_per_unit_logeps": float,
                    "additive_offset": float}         # optional, default 0
    }

The optimization variable has one entry per binding group, in the order the
groups appear in the file.  Unknown keys are rejected everywhere so typos
cannot silently change a model.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

from .model import (
    BudgetNode,
    ChildEdge,
    LeafCost,
    Multiplicity,
    NodeKind,
    ParameterBinding,
    Rounding,
)


class ModelFormatError(ValueError):
    """Raised for malformed or schema-violating model files.

    ``location`` is either a ``line:column`` anchor (JSON syntax errors) or a
    path into the document (schema errors).
    """

    def __init__(self, message: str, location: str = "") -> None:
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)


def _require_keys(obj: dict, allowed: set[str], required: set[str], where: str) -> None:
    for key in obj:
        if key not in allowed:
            raise ModelFormatError(f"unknown key {key!r}", where)
    for key in required:
        if key not in obj:
            raise ModelFormatError(f"missing key {key!r}", where)


def _number(obj: dict, key: str, where: str, default: float | None = None) -> float:
    if key not in obj:
        if default is None:
            raise ModelFormatError(f"missing key {key!r}", where)
        return default
    value = obj[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ModelFormatError(f"key {key!r} must be a number", where)
    return float(value)


def _parse_multiplicity(obj: Any, where: str) -> Multiplicity:
    if not isinstance(obj, dict):
        raise ModelFormatError("multiplicity must be an object", where)
    _require_keys(obj, {"coefficient", "exponent", "rounding"}, {"coefficient"}, where)
    rounding = obj.get("rounding", "continuous")
    if rounding not in ("continuous", "ceil"):
        raise ModelFormatError(f"unknown rounding {rounding!r}", where)
    return Multiplicity(
        coefficient=_number(obj, "coefficient", where),
        exponent=_number(obj, "exponent", where, default=0.0),
        rounding=Rounding(rounding),
    )


def _parse_leaf_cost(obj: Any, where: str) -> LeafCost:
    if not isinstance(obj, dict):
        raise ModelFormatError("leaf_cost must be an object", where)
    _require_keys(
        obj,
        {"count", "gates_per_unit_logeps", "additive_offset"},
        {"count", "gates_per_unit_logeps"},
        where,
    )
    return LeafCost(
        count=_number(obj, "count", where),
        gates_per_unit_logeps=_number(obj, "gates_per_unit_logeps", where),
        additive_offset=_number(obj, "additive_offset", where, default=0.0),
    )


def _parse_node(obj: Any, where: str) -> BudgetNode:
    if not isinstance(obj, dict):
        raise ModelFormatError("node must be an object", where)
    _require_keys(
        obj,
        {"name", "kind", "self_error_group", "children", "leaf_cost"},
        {"name", "kind"},
        where,
    )
    name = obj["name"]
    if not isinstance(name, str) or not name:
        raise ModelFormatError("node name must be a non-empty string", where)
    kind = obj["kind"]
    if kind not in ("composite", "leaf"):
        raise ModelFormatError(f"unknown node kind {kind!r}", where)
    slot = obj.get("self_error_group")
    if slot is not None and not isinstance(slot, str):
        raise ModelFormatError("self_error_group must be a string", where)

    if kind == "leaf":
        if "children" in obj:
            raise ModelFormatError("leaf nodes cannot have children", where)
        if "leaf_cost" not in obj:
            raise ModelFormatError("leaf nodes require a leaf_cost", where)
        return BudgetNode.leaf(name, slot, _parse_leaf_cost(obj["leaf_cost"], f"{where}.leaf_cost"))

    if "leaf_cost" in obj:
        raise ModelFormatError("composite nodes cannot carry a leaf_cost", where)
    children = obj.get("children", [])
    if not isinstance(children, list):
        raise ModelFormatError("children must be a list", where)
    edges = []
    for i, child in enumerate(children):
        cwhere = f"{where}.children[{i}]"
        if not isinstance(child, dict):
            raise ModelFormatError("child entry must be an object", cwhere)
        _require_keys(child, {"multiplicity", "node"}, {"multiplicity", "node"}, cwhere)
        edges.append(
            (
                _parse_multiplicity(child["multiplicity"], f"{cwhere}.multiplicity"),
                _parse_node(child["node"], f"{cwhere}.node"),
            )
        )
    return BudgetNode.composite(name, slot, edges)


def _parse_binding(obj: Any, where: str) -> ParameterBinding:
    if not isinstance(obj, dict):
        raise ModelFormatError("binding must be an object", where)
    _require_keys(obj, {"groups"}, {"groups"}, where)
    groups = obj["groups"]
    if not isinstance(groups, dict):
        raise ModelFormatError("binding groups must be an object", f"{where}.groups")
    parsed: dict[str, list[str]] = {}
    for gname, slots in groups.items():
        gwhere = f"{where}.groups.{gname}"
        if not isinstance(slots, list) or not all(isinstance(s, str) for s in slots):
            raise ModelFormatError("group must be a list of slot names", gwhere)
        parsed[gname] = list(slots)
    return ParameterBinding.from_dict(parsed)


def model_from_dict(document: Any) -> tuple[BudgetNode, ParameterBinding]:
    """Parse an already-decoded model document."""
    if not isinstance(document, dict):
        raise ModelFormatError("model document must be an object", "$")
    _require_keys(document, {"root", "binding"}, {"root", "binding"}, "$")
    tree = _parse_node(document["root"], "$.root")
    binding = _parse_binding(document["binding"], "$.binding")
    return tree, binding


def model_to_dict(tree: BudgetNode, binding: ParameterBinding) -> dict:
    """Serialise a tree/binding pair into the model document structure."""

    def node_dict(node: BudgetNode) -> dict:
        out: dict[str, Any] = {"name": node.name, "kind": node.kind.value}
        if node.self_error_slot is not None:
            out["self_error_group"] = node.self_error_slot
        if node.kind is NodeKind.LEAF:
            assert node.leaf_cost is not None
            out["leaf_cost"] = {
                "count": node.leaf_cost.count,
                "gates_per_unit_logeps": node.leaf_cost.gates_per_unit_logeps,
                "additive_offset": node.leaf_cost.additive_offset,
            }
        else:
            out["children"] = [
                {
                    "multiplicity": {
                        "coefficient": edge.multiplicity.coefficient,
                        "exponent": edge.multiplicity.exponent,
                        "rounding": edge.multiplicity.rounding.value,
                    },
                    "node": node_dict(edge.node),
                }
                for edge in node.children
            ]
        return out

    return {
        "root": node_dict(tree),
        "binding": {"groups": {name: list(slots) for name, slots in binding.groups}},
    }


def load_model(path: str | Path) -> tuple[BudgetNode, ParameterBinding]:
    """Load and parse a model file, anchoring syntax errors to line/column."""
    text = Path(path).read_text()
    try:
        document = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(exc.msg, f"{path}:{exc.lineno}:{exc.colno}") from exc
    return model_from_dict(document)


def save_model(tree: BudgetNode, binding: ParameterBinding, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(tree, binding), indent=2) + "\n")
