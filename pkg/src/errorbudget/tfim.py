"""Benchmark budget model: phase estimation over a Trotterised Ising evolution.

The tree has three levels.  The root is the phase-estimation loop, invoking
the controlled time-evolution step ``qpe_coefficient / eps_qpe`` times.  The
evolution step splits into two rotation layers (ZZ couplings and transverse-X
fields), each repeated ``trotter_coefficient / sqrt(eps_trotter)`` times.
Every layer contains ``2 N`` rotations, each synthesised at cost
``synthesis_gates_per_log * log(1/eps_r)``.

Presets select the binding granularity on this tree:

* ``three_param`` -- one group per stage: ``(eps_qpe, eps_trotter, eps_r)``.
* ``two_param``   -- rotation synthesis tied to the Trotter tolerance.
* ``redundancy``  -- the ``4 N`` rotation units split into ``k + 1`` synthesis
  groups of near-equal size, each with its own tolerance; useful for probing
  optimizer robustness against superfluous parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .model import BudgetNode, LeafCost, Multiplicity, ParameterBinding

PRESETS = ("three_param", "two_param", "redundancy")


class ConfigurationError(ValueError):
    """Raised for benchmark configurations that cannot be built."""


@dataclass(frozen=True)
class TfimConfig:
    """Parameters of the benchmark model.

    ``n`` is the length of the periodic spin chain.  ``qpe_coefficient`` is
    the phase-estimation repetition constant (``16 pi`` for a 1/2 success
    probability).  ``trotter_coefficient`` scales the number of evolution
    steps, ``M(eps) = trotter_coefficient / sqrt(eps)``.  Synthesis cost is
    counted as ``synthesis_gates_per_log`` gates per ``log(1/eps_r)`` digit in
    base ``log_base``.
    """

    n: int = 10
    trotter_coefficient: float = 1.0
    qpe_coefficient: float = 16.0 * math.pi
    synthesis_gates_per_log: float = 4.0
    log_base: float = 2.0

    def __post_init__(self) -> None:
        if self.n < 2:
            raise ConfigurationError(f"chain length must be at least 2, got {self.n}")
        for name in ("trotter_coefficient", "qpe_coefficient", "synthesis_gates_per_log"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.log_base <= 1:
            raise ConfigurationError(f"log_base must exceed 1, got {self.log_base}")

    @property
    def gates_per_log2(self) -> float:
        """Synthesis gates per binary digit of accuracy."""
        return self.synthesis_gates_per_log / math.log2(self.log_base)


def _rotation_layers(config: TfimConfig, redundant: int) -> list[tuple[str, list[tuple[str, int]]]]:
    """Split the two rotation layers into synthesis groups.

    Returns ``[(layer name, [(slot, count), ...]), ...]`` where the layer's
    counts sum to ``2 N`` and each slot appears in at most two layers.  The
    ``4 N`` rotation units are distributed over ``redundant + 1`` groups as
    evenly as possible, filling unit positions in order; a group overlapping
    the layer boundary contributes to both layers.
    """
    groups = redundant + 1
    units = 4 * config.n
    if groups > units:
        raise ConfigurationError(
            f"cannot split {units} rotation units into {groups} non-empty groups"
        )
    base, extra = divmod(units, groups)
    sizes = [base + 1 if g < extra else base for g in range(groups)]

    layers: list[tuple[str, list[tuple[str, int]]]] = [
        ("zz_rotations", []),
        ("x_rotations", []),
    ]
    half = 2 * config.n
    start = 0
    for g, size in enumerate(sizes):
        end = start + size
        slot = f"eps_r_{g}" if redundant else "eps_r"
        in_first = min(end, half) - min(start, half)
        in_second = size - in_first
        if in_first:
            layers[0][1].append((slot, in_first))
        if in_second:
            layers[1][1].append((slot, in_second))
        start = end
    return layers


def build_tfim_model(
    config: TfimConfig, preset: str = "three_param", redundant: int = 0
) -> tuple[BudgetNode, ParameterBinding]:
    """Construct the benchmark tree and the binding selected by ``preset``.

    ``redundant`` is the number of extra rotation-synthesis groups and only
    applies to the ``redundancy`` preset; ``redundancy`` with ``redundant=0``
    evaluates identically to ``three_param``.
    """
    if preset not in PRESETS:
        raise ConfigurationError(f"unknown preset {preset!r}; expected one of {PRESETS}")
    if preset != "redundancy":
        if redundant:
            raise ConfigurationError(f"preset {preset!r} does not take redundant groups")
    elif redundant < 0:
        raise ConfigurationError(f"redundant group count must be >= 0, got {redundant}")

    layers = _rotation_layers(config, redundant if preset == "redundancy" else 0)
    per_step = Multiplicity(coefficient=config.trotter_coefficient, exponent=0.5)

    leaves = []
    for layer_name, parts in layers:
        for slot, count in parts:
            name = layer_name if len(parts) == 1 else f"{layer_name}_{slot.rsplit('_', 1)[-1]}"
            leaf = BudgetNode.leaf(
                name, slot, LeafCost(count=count, gates_per_unit_logeps=config.gates_per_log2)
            )
            leaves.append((per_step, leaf))

    evolution = BudgetNode.composite("trotter_step", "eps_trotter", leaves)
    root = BudgetNode.composite(
        "phase_estimation",
        "eps_qpe",
        [(Multiplicity(coefficient=config.qpe_coefficient, exponent=1.0), evolution)],
    )

    rotation_slots = sorted(
        {slot for _, parts in layers for slot, _ in parts},
        key=lambda s: int(s.rsplit("_", 1)[-1]) if s != "eps_r" else 0,
    )
    if preset == "two_param":
        binding = ParameterBinding.from_dict(
            {"eps_qpe": ["eps_qpe"], "eps_trotter": ["eps_trotter", *rotation_slots]}
        )
    elif preset == "three_param":
        binding = ParameterBinding.from_dict(
            {"eps_qpe": ["eps_qpe"], "eps_trotter": ["eps_trotter"], "eps_r": rotation_slots}
        )
    else:
        groups: dict[str, list[str]] = {"eps_qpe": ["eps_qpe"], "eps_trotter": ["eps_trotter"]}
        for slot in rotation_slots:
            groups[slot] = [slot]
        binding = ParameterBinding.from_dict(groups)
    return root, binding


def rotation_group_binding(binding: ParameterBinding) -> ParameterBinding:
    """Coarsen a redundancy binding by merging all rotation groups into one.

    The result solves the same problem as ``three_param`` on the same tree and
    is the natural coarse stage for warm-starting the redundant optimization.
    """
    rotation_slots: list[str] = []
    kept: list[tuple[str, tuple[str, ...]]] = []
    for name, slots in binding.groups:
        if name.startswith("eps_r"):
            rotation_slots.extend(slots)
        else:
            kept.append((name, slots))
    if not rotation_slots:
        raise ConfigurationError("binding has no rotation-synthesis groups to merge")
    kept.append(("eps_r", tuple(rotation_slots)))
    return ParameterBinding(tuple(kept))
