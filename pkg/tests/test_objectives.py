import numpy as np
import pytest
from hypothesis import given, strategies as st

from fzmoo.errors import ValidationError
from fzmoo.objectives import (
    Constraint, ObjectiveSpec, constraint_violation, evaluate_objectives, load_objectives, objective_matrix,
    objectives_from_dict, population_evaluator, table_objectives, to_raw, voronkov_penalty,
)

SPECS = table_objectives()


def _point(x1=90.0, x2=2.0):
    x = np.array([x1, x2, 3, 45, 2.5, 2.0, 2.5, 2.7, 50, 20, 2.5, 0.5])
    return x


def _constant(y):
    return lambda X: np.tile(np.asarray(y, dtype=float), (len(np.atleast_2d(X)), 1))


def test_voronkov_branches():
    assert voronkov_penalty(1.5e-3) == 0.0
    assert voronkov_penalty(1.3e-3) == 0.0 and voronkov_penalty(2.2e-3) == 0.0
    assert voronkov_penalty(1.0e-3) == pytest.approx(3.0e-4, abs=1e-15)
    assert voronkov_penalty(3.0e-3) == pytest.approx(8.0e-4, abs=1e-15)
    np.testing.assert_allclose(voronkov_penalty(np.array([1e-3, 2e-3])), [3e-4, 0])


@given(st.floats(0, 1e-2))
def test_voronkov_is_distance_to_interval(g):
    assert voronkov_penalty(g) == pytest.approx(max(0.0, 1.3e-3 - g, g - 2.2e-3), abs=1e-18)


def test_table_contents():
    assert [s.id for s in SPECS] == [f"O{j}" for j in range(1, 9)]
    assert [s.source for s in SPECS] == ["x1", "x2", "y1", "y2", "y3", "y4", "y5", "y6"]
    assert [s.direction for s in SPECS] == ["maximize"] * 3 + ["minimize"] * 4 + ["interval"]
    bounds = [(s.constraint.op, s.constraint.bound) if s.constraint else None for s in SPECS]
    assert bounds == [(">=", 85), (">=", 1.5), None, ("<=", 70), ("<=", 80), ("<=", 1200), (">=", 0), None]
    assert SPECS[7].penalty == (1.3e-3, 2.2e-3)


def test_constraint_violation_examples():
    assert constraint_violation(SPECS[0], 80.0) == pytest.approx(5 / 85)
    assert constraint_violation(SPECS[5], 1250.0) == pytest.approx(50 / 1200)
    assert constraint_violation(SPECS[6], 0.3) == 0.0
    assert constraint_violation(Constraint(">=", 0.0), -0.5) == 0.5
    with pytest.raises(ValidationError):
        constraint_violation(SPECS[2], 1.0)


def test_objective_vector_example():
    ov = evaluate_objectives(_point(), _constant([25, 40, 60, 1000, 1.0, 1.5e-3]))
    np.testing.assert_allclose(ov.values, [-90, -2.0, -25, 40, 60, 1000, 1.0, 0])
    assert ov.total_violation == 0 and ov.feasible


def test_single_active_constraint():
    ov = evaluate_objectives(_point(x1=80), _constant([25, 40, 60, 1000, 1.0, 1.5e-3]))
    assert not ov.feasible
    assert ov.total_violation == pytest.approx(0.0588, abs=1e-4)


def test_voronkov_objective_has_no_constraint():
    ov = evaluate_objectives(_point(), _constant([25, 40, 60, 1000, 1.0, 3.0e-3]))
    assert ov.values[7] == pytest.approx(8.0e-4)
    assert ov.feasible


def test_violations_sum():
    F, cv = objective_matrix(_point(x1=80)[None], np.array([[25, 75, 60, 1260, 1.0, 1.5e-3]]))
    assert cv[0] == pytest.approx(5 / 85 + 5 / 70 + 60 / 1200)


def test_to_raw_undoes_orientation():
    F, _ = objective_matrix(_point()[None], np.array([[25, 40, 60, 1000, 1.0, 1.5e-3]]))
    np.testing.assert_allclose(to_raw(F)[0], [90, 2, 25, 40, 60, 1000, 1.0, 0])


def test_population_evaluator_matches_pointwise():
    pred = lambda X: np.column_stack([X[:, 0] / 4, X[:, 1] * 20, X[:, 3], X[:, 8] * 20, X[:, 4], X[:, 1] / 1000])
    X = np.vstack([_point(), _point(80, 1.2)])
    F, cv = population_evaluator(pred)(X)
    for i in range(2):
        ov = evaluate_objectives(X[i], pred)
        np.testing.assert_allclose(F[i], ov.values)
        assert cv[i] == pytest.approx(ov.total_violation)


def test_evaluate_objectives_rejects_bad_arity():
    with pytest.raises(ValidationError):
        evaluate_objectives(np.zeros(11), _constant(np.zeros(6)))


def test_spec_validation_and_custom_table(tmp_path):
    with pytest.raises(ValidationError):
        ObjectiveSpec("O1", "z1", "maximize")
    with pytest.raises(ValidationError):
        ObjectiveSpec("O1", "y1", "interval")
    with pytest.raises(ValidationError):
        objectives_from_dict({"objectives": [{"id": "O1"}]})
    p = tmp_path / "obj.json"
    p.write_text('{"objectives": [{"id": "A", "source": "y2", "direction": "minimize",'
                 ' "constraint": {"op": "<=", "bound": 50}}]}')
    (spec,) = load_objectives(p)
    assert spec.constraint.bound == 50.0 and spec.column == 1 and not spec.from_input
