import math

import numpy as np
import pytest

from errorbudget.model import total_cost, total_error, validate_model
from errorbudget.tfim import (
    ConfigurationError,
    TfimConfig,
    build_tfim_model,
    rotation_group_binding,
)

from test_model import closed_form_cost, closed_form_error


def test_three_param_reference_point():
    cfg = TfimConfig(n=10)
    tree, binding = build_tfim_model(cfg)
    theta = [0.05, 1e-4, 1e-9]
    assert total_cost(tree, binding, theta) == pytest.approx(4.81e8, rel=2e-3)
    assert total_error(tree, binding, theta) == pytest.approx(0.1546, rel=1e-3)


def test_all_presets_validate():
    cfg = TfimConfig(n=10)
    for preset, redundant in (("three_param", 0), ("two_param", 0), ("redundancy", 7)):
        tree, binding = build_tfim_model(cfg, preset, redundant)
        report = validate_model(tree, binding)
        assert report.ok, report.violations


def test_two_param_equals_three_param_on_diagonal():
    cfg = TfimConfig(n=10)
    tree3, binding3 = build_tfim_model(cfg, "three_param")
    tree2, binding2 = build_tfim_model(cfg, "two_param")
    assert binding2.dimension == 2
    a, t = 0.07, 3e-5
    assert total_cost(tree2, binding2, [a, t]) == total_cost(tree3, binding3, [a, t, t])
    assert total_error(tree2, binding2, [a, t]) == total_error(tree3, binding3, [a, t, t])


def test_redundancy_zero_is_three_param():
    cfg = TfimConfig(n=10)
    tree3, binding3 = build_tfim_model(cfg, "three_param")
    tree0, binding0 = build_tfim_model(cfg, "redundancy", 0)
    theta = [0.05, 1e-4, 1e-9]
    assert total_cost(tree0, binding0, theta) == total_cost(tree3, binding3, theta)
    assert total_error(tree0, binding0, theta) == total_error(tree3, binding3, theta)


def test_closed_form_agreement_random_points():
    cfg = TfimConfig(n=10)
    tree, binding = build_tfim_model(cfg)
    rng = np.random.default_rng(5)
    for _ in range(1000):
        a, t, r = 10.0 ** rng.uniform(-12, -0.01, size=3)
        theta = [a, t, r]
        assert total_cost(tree, binding, theta) == pytest.approx(
            closed_form_cost(cfg, a, t, r), rel=1e-12
        )
        assert total_error(tree, binding, theta) == pytest.approx(
            closed_form_error(cfg, a, t, r), rel=1e-12
        )


def test_redundancy_symmetry_on_diagonal():
    cfg = TfimConfig(n=10)
    tree3, binding3 = build_tfim_model(cfg, "three_param")
    rng = np.random.default_rng(9)
    for k in (1, 4, 11):
        treek, bindingk = build_tfim_model(cfg, "redundancy", k)
        assert bindingk.dimension == k + 3
        for _ in range(20):
            a, t, r = 10.0 ** rng.uniform(-10, -0.1, size=3)
            theta_k = [a, t] + [r] * (k + 1)
            assert total_cost(treek, bindingk, theta_k) == pytest.approx(
                total_cost(tree3, binding3, [a, t, r]), rel=1e-12
            )
            assert total_error(treek, bindingk, theta_k) == pytest.approx(
                total_error(tree3, binding3, [a, t, r]), rel=1e-12
            )


def test_redundancy_group_counts_are_balanced():
    cfg = TfimConfig(n=10)
    tree, binding = build_tfim_model(cfg, "redundancy", 6)
    counts: dict[str, float] = {}
    for node in tree.walk():
        if node.leaf_cost is not None:
            counts[node.self_error_slot] = counts.get(node.self_error_slot, 0) + node.leaf_cost.count
    sizes = sorted(counts.values())
    assert sum(sizes) == 4 * cfg.n
    assert sizes[-1] - sizes[0] <= 1


def test_redundancy_too_many_groups():
    cfg = TfimConfig(n=10)
    with pytest.raises(ConfigurationError):
        build_tfim_model(cfg, "redundancy", 4 * cfg.n)  # 4N + 1 groups > 4N units
    build_tfim_model(cfg, "redundancy", 4 * cfg.n - 1)  # exactly 4N singleton groups


def test_rotation_group_binding_coarsens_redundancy():
    cfg = TfimConfig(n=10)
    treek, bindingk = build_tfim_model(cfg, "redundancy", 5)
    coarse = rotation_group_binding(bindingk)
    assert coarse.dimension == 3
    tree3, binding3 = build_tfim_model(cfg, "three_param")
    a, t, r = 0.03, 2e-6, 4e-11
    assert total_cost(treek, coarse, [a, t, r]) == pytest.approx(
        total_cost(tree3, binding3, [a, t, r]), rel=1e-12
    )


def test_config_rejects_bad_values():
    with pytest.raises(ConfigurationError):
        TfimConfig(n=1)
    with pytest.raises(ConfigurationError):
        TfimConfig(n=4, qpe_coefficient=0.0)
    with pytest.raises(ConfigurationError):
        build_tfim_model(TfimConfig(n=4), "nonsense")


def test_log_base_rescales_synthesis_cost():
    cfg2 = TfimConfig(n=4, log_base=2.0)
    cfge = TfimConfig(n=4, log_base=math.e)
    tree2, binding2 = build_tfim_model(cfg2)
    treee, bindinge = build_tfim_model(cfge)
    theta = [0.05, 1e-3, 1e-6]
    ratio = total_cost(treee, bindinge, theta) / total_cost(tree2, binding2, theta)
    assert ratio == pytest.approx(1.0 / math.log2(math.e), rel=1e-12)
