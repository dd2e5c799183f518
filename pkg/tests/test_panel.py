import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from felogit.errors import SchemaError, ValidationError
from felogit.montecarlo import DgpConfig, generate
from felogit.panel import PanelDataset, check_rank_condition, load_panel, write_panel


def _write(path, text):
    path.write_text(text)
    return path


def test_two_row_file(tmp_path):
    f = _write(tmp_path / "a.csv", "id,t,y,x\n1,1,0,0.1\n1,2,1,0.4\n")
    d = load_panel(f)
    assert d.n == 1 and d.T.tolist() == [2] and d.s.tolist() == [1]
    np.testing.assert_array_equal(d.x[0, :, 0], [0.1, 0.4])
    assert d.ids == ["1"]


def test_nonbinary_outcome_names_row(tmp_path):
    f = _write(tmp_path / "a.csv", "id,t,y,x\n1,1,0,0.1\n1,2,2,0.4\n")
    with pytest.raises(ValidationError, match="row 1"):
        load_panel(f)


def test_missing_column_is_schema_error(tmp_path):
    f = _write(tmp_path / "a.csv", "id,period,y,x\n1,1,0,0.1\n1,2,1,0.4\n")
    with pytest.raises(SchemaError):
        load_panel(f)
    d = load_panel(f, {"period": "period"})
    assert d.n == 1


def test_duplicate_id_period(tmp_path):
    f = _write(tmp_path / "a.csv", "id,t,y,x\n1,1,0,0.1\n1,1,1,0.4\n1,2,1,0.4\n")
    with pytest.raises(ValidationError, match="duplicates"):
        load_panel(f)


def test_single_period_unit_rejected(tmp_path):
    f = _write(tmp_path / "a.csv", "id,t,y,x\n1,1,0,0.1\n1,2,1,0.4\n2,1,1,0.3\n")
    with pytest.raises(ValidationError):
        load_panel(f)


def test_effect_by_name(tmp_path):
    f = _write(tmp_path / "a.csv", "id,t,y,a,b\n1,1,0,0.1,1\n1,2,1,0.4,0\n")
    d = load_panel(f, effect="b")
    assert d.effect_index == 1 and d.covariates == ["a", "b"]


def test_dgp1_round_trip(tmp_path):
    data = generate(DgpConfig(1, 2, 250, 1.0, seed=3, reps=1))
    write_panel(data, tmp_path / "d.csv")
    back = load_panel(tmp_path / "d.csv")
    assert back.n == 250 and np.all(back.T == 2)
    np.testing.assert_array_equal(back.y, data.y)
    np.testing.assert_array_equal(back.x, data.x)
    np.testing.assert_array_equal(back.s, data.y.sum(axis=1))


def test_unbalanced_round_trip(tmp_path):
    data = generate(DgpConfig(1, n=200, seed=4, reps=1, T_values=(2, 3)))
    write_panel(data, tmp_path / "d.csv")
    back = load_panel(tmp_path / "d.csv")
    np.testing.assert_array_equal(back.T, data.T)
    np.testing.assert_array_equal(back.x, data.x)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 12), st.integers(2, 4), st.integers(1, 3), st.integers(0, 2**31))
def test_write_load_identity(n, T, p, seed):
    import tempfile
    from pathlib import Path

    r = np.random.default_rng(seed)
    y = r.integers(0, 2, size=(n, T))
    x = r.normal(size=(n, T, p))
    d = PanelDataset(y, x)
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "p.csv"
        write_panel(d, path)
        back = load_panel(path)
    np.testing.assert_array_equal(back.x, d.x)
    np.testing.assert_array_equal(back.y, d.y)
    np.testing.assert_array_equal(back.s, d.y.sum(axis=1))


def test_rank_stayers_only():
    x = np.repeat(np.array([[0.3], [1.0], [-2.0]]), 3, axis=1)
    rc = check_rank_condition(PanelDataset(np.zeros((3, 3)), x))
    np.testing.assert_allclose(rc.matrix, 0.0)
    assert not rc.nonsingular


def test_rank_single_unit():
    rc = check_rank_condition(PanelDataset([[0, 1]], [[0.0, 1.0]]))
    np.testing.assert_allclose(rc.matrix, [[2.0]])
    assert rc.nonsingular


def test_rank_dgp1_population_value():
    data = generate(DgpConfig(1, 2, 1000, 1.0, seed=1, reps=1))
    rc = check_rank_condition(data)
    assert rc.nonsingular
    assert abs(rc.min_eigenvalue - 2 * 2 / 12) <= 0.2 * (4 / 12)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 20), st.integers(2, 5), st.integers(1, 4), st.integers(0, 2**31))
def test_rank_matrix_psd(n, T, p, seed):
    x = np.random.default_rng(seed).normal(size=(n, T, p)) * 10
    mat = check_rank_condition(PanelDataset(np.zeros((n, T)), x)).matrix
    np.testing.assert_allclose(mat, mat.T)
    eig = np.linalg.eigvalsh(mat)
    assert eig.min() >= -1e-12 * max(1.0, eig.max())


def test_dataset_validation():
    with pytest.raises(ValidationError):
        PanelDataset([[0, 0.5]], [[0.0, 1.0]])
    with pytest.raises(ValidationError):
        PanelDataset([[0, 1]], [[0.0, np.nan]])
    with pytest.raises(ValidationError):
        PanelDataset([[0, 1], [1, 0]], np.zeros((2, 2)), ids=["a", "a"])
    with pytest.raises(ValidationError):
        PanelDataset([[0]], [[0.0]])


def test_subset_and_strata():
    data = generate(DgpConfig(1, n=100, seed=2, reps=1, T_values=(2, 3)))
    strata = dict(data.strata())
    assert set(strata) == {2, 3}
    sub = data.subset(strata[2])
    assert sub.balanced and sub.y.shape[1] == 2
    with pytest.raises(ValidationError):
        data.balanced_arrays()
