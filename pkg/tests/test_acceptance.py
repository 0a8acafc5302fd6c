"""Acceptance suite: one test per release criterion, one PASS line each.

Run with ``pytest tests/test_acceptance.py -v -s``.  The budget-heavy studies
(redundancy, runtime) use the shipped experiment defaults; everything is
seeded, so reruns are reproducible.
"""

import math
import tempfile
from pathlib import Path

import numpy as np
import pytest

from errorbudget.anneal import AnnealConfig, anneal, grid_search_reference, log_grid
from errorbudget.experiments import default_spec, run_experiment
from errorbudget.model import (
    ExpansionLimitError,
    NodeKind,
    expand_flat,
    total_cost,
    total_error,
)
from errorbudget.normlab import (
    IsingEvolutionSpec,
    fit_loglog_slope,
    trotter_error_sweep,
    verify_composition_bound,
)
from errorbudget.tfim import TfimConfig, build_tfim_model

from test_model import random_tree


def report(name: str, detail: str) -> None:
    print(f"\nACCEPTANCE {name}: PASS ({detail})")


@pytest.fixture(scope="module")
def workdir():
    with tempfile.TemporaryDirectory() as tmp:
        yield Path(tmp)


def test_01_flat_expansion_matches_recursive_evaluators():
    """Recursive cost/error equal the brute-force flat expansion, 200 trees."""
    rng = np.random.default_rng(101)
    checked = 0
    while checked < 200:
        tree, binding, theta = random_tree(rng)
        try:
            entries = expand_flat(tree, binding, theta, max_instances=10**6)
        except ExpansionLimitError:
            continue
        checked += 1
        root_eps = (
            theta[binding.slot_index()[tree.self_error_slot]]
            if tree.self_error_slot and tree.kind is NodeKind.COMPOSITE
            else 0.0
        )
        flat_cost = sum(e.count * e.unit_cost for e in entries)
        flat_error = root_eps + sum(e.count * e.tolerance for e in entries)
        assert flat_cost == pytest.approx(
            total_cost(tree, binding, theta), rel=1e-12, abs=1e-12
        )
        assert flat_error == pytest.approx(
            total_error(tree, binding, theta), rel=1e-12, abs=1e-12
        )
    report("1 flat/recursive equivalence", f"{checked} random ceil-rounded trees")


def test_02_composition_bound_never_violated():
    """10^4 randomized product trials stay within the summed budgets."""
    rng = np.random.default_rng(202)
    trials_per_cell = 10_000 // 9 + 1
    total = 0
    worst = 0.0
    for dimension in (2, 4, 8):
        for length in (2, 5, 10):
            epsilons = 10.0 ** rng.uniform(-4, -1, size=length)
            rep = verify_composition_bound(length, dimension, epsilons, trials_per_cell, rng)
            assert rep.violations == 0
            total += rep.trials
            worst = max(worst, rep.max_ratio)
    assert total >= 10_000
    report("2 composition bound", f"{total} trials, max observed/budget ratio {worst:.4f}")


def test_03_split_step_error_scaling():
    """Split-step error shrinks ~1/M (first order) and ~1/M^2 (second)."""
    step_counts = [8, 16, 32, 64, 128]
    slopes = {}
    for order in ("first", "second"):
        spec = IsingEvolutionSpec.uniform(3, 1.0, 1.0, 1.0, 8, order)
        slopes[order] = fit_loglog_slope(trotter_error_sweep(spec, step_counts))
    assert -1.2 <= slopes["first"] <= -0.8
    assert -2.2 <= slopes["second"] <= -1.8
    report(
        "3 split-step scaling",
        f"slopes first={slopes['first']:.3f}, second={slopes['second']:.3f}",
    )


def test_04_optimization_beats_first_feasible(workdir):
    """Two-mode optimization beats stop-at-feasible by >= 1.3x on average."""
    spec = default_spec("cost_vs_eps", workdir / "cost_vs_eps.csv", targets=(1e-1, 1e-2, 1e-3))
    result = run_experiment(spec)
    ratios = []
    for row in result.rows:
        assert row["flagged"] == 0
        assert row["optimized_cost"] <= row["feasible_only_cost"]
        ratios.append(row["ratio"])
    geomean = math.exp(sum(math.log(r) for r in ratios) / len(ratios))
    assert geomean >= 1.3
    report(
        "4 optimization gain",
        f"geometric-mean improvement {geomean:.3f} over {len(ratios)} targets",
    )


def test_05_three_params_beat_two_by_an_order(workdir):
    """Finer tolerance granularity wins >= 10x at the tightest target."""
    spec = default_spec("granularity", workdir / "granularity.csv", targets=(1e-1, 1e-2, 1e-3))
    result = run_experiment(spec)
    row = result.rows[-1]
    assert row["epsilon_target"] == 1e-3
    assert row["flagged"] == 0
    assert row["cost_3param"] <= 0.1 * row["cost_2param"]
    report(
        "5 granularity gain",
        f"3-param/2-param cost ratio {row['cost_3param'] / row['cost_2param']:.3e} at 1e-3",
    )


def test_06_annealer_matches_grid_oracle():
    """Best-of-20 annealed cost is within 2x of the exhaustive grid optimum."""
    tree, binding = build_tfim_model(TfimConfig(n=10))
    grid = [log_grid(1e-12, 1.0, 50)] * 3
    # oracle values pinned from the first verified run of this configuration
    pinned = {1e-1: 697097954.105995, 1e-2: 80530669879.883}
    details = []
    for i, (eps, expected_cost) in enumerate(pinned.items()):
        _, grid_cost = grid_search_reference(tree, binding, eps, grid)
        assert grid_cost == pytest.approx(expected_cost, rel=1e-12)
        result = anneal(
            tree, binding, eps, AnnealConfig(restarts=20, seed=601 + i), record_trace=False
        )
        assert result.feasible
        assert result.best_cost <= 2.0 * grid_cost
        details.append(f"eps={eps:g}: anneal/grid={result.best_cost / grid_cost:.3f}")
    report("6 annealer vs grid oracle", "; ".join(details))


def test_07_redundant_parameters_degrade_gracefully(workdir):
    """Cost grows with redundancy; optimization gains shrink but persist."""
    spec = default_spec("redundancy", workdir / "redundancy.csv")
    result = run_experiment(spec)
    rows = result.rows
    assert [r["k_redundant"] for r in rows] == list(range(0, 101, 10))
    for row in rows:
        assert row["flagged"] == 0, f"k={row['k_redundant']} found no feasible point"

    costs = [r["best_cost"] for r in rows]
    inversions = [
        (a, b) for a, b in zip(costs, costs[1:]) if b < a
    ]
    assert len(inversions) <= 1
    for a, b in inversions:
        assert b >= 0.95 * a, f"inversion deeper than 5%: {a} -> {b}"

    k0, k100 = rows[0], rows[-1]
    assert k100["improvement_factor"] > 1.0
    assert k100["improvement_factor"] < k0["improvement_factor"]
    report(
        "7 redundancy trend",
        f"cost ratio k=100/k=0 {k100['best_cost'] / k0['best_cost']:.2f}; "
        f"improvement factors k0={k0['improvement_factor']:.3f} > "
        f"k100={k100['improvement_factor']:.3f}; {len(inversions)} inversion(s)",
    )


def test_08_feasibility_walk_scales_quadratically(workdir):
    """Median steps to feasibility grow ~quadratically with parameter count."""
    spec = default_spec("runtime", workdir / "runtime.csv")
    result = run_experiment(spec)
    points = [
        (row["num_params"], row["median_steps_to_feasible"]) for row in result.rows
    ]
    assert [p for p, _ in points] == [13, 23, 43, 83]
    slope = fit_loglog_slope(points)
    assert 1.5 <= slope <= 2.5
    report("8 feasibility-walk scaling", f"log-log slope {slope:.3f} over {points}")


def test_09_experiments_are_deterministic(workdir):
    """Identical seeds reproduce CSV bodies byte for byte.

    The runtime study's wall-time column is a physical measurement and is
    excluded; its step counts and row structure must still match exactly.
    """
    small = dict(
        targets=(1e-1,),
        tfim=TfimConfig(n=6),
        anneal=AnnealConfig(num_steps=1200, restarts=3, seed=31),
    )
    checked = []
    for kind in ("cost_vs_eps", "granularity", "redundancy", "runtime"):
        extra = {}
        if kind == "redundancy":
            extra = dict(redundancies=(0, 2), optimize_max_steps=20_000)
        if kind == "runtime":
            extra = dict(redundancies=(2, 4), feasibility_max_steps=30_000)
        first_dir = workdir / f"det_{kind}_a"
        second_dir = workdir / f"det_{kind}_b"
        first_dir.mkdir()
        second_dir.mkdir()
        outputs = []
        for directory in (first_dir, second_dir):
            spec = default_spec(kind, directory / "out.csv", **small, **extra)
            outputs.append(run_experiment(spec).csv_path.read_text())
        if kind == "runtime":
            def strip(text):
                lines = text.splitlines()
                idx = lines[0].split(",").index("median_wall_time")
                return [
                    ",".join(v for i, v in enumerate(line.split(",")) if i != idx)
                    for line in lines
                ]
            assert strip(outputs[0]) == strip(outputs[1])
            checked.append(f"{kind} (modulo wall time)")
        else:
            assert outputs[0] == outputs[1]
            checked.append(kind)
    report("9 determinism", "byte-identical reruns: " + ", ".join(checked))
