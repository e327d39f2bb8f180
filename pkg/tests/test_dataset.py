import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stagedtree import (
    DataError,
    Dataset,
    Schema,
    Variable,
    bootstrap_replicate,
    derived_seed,
    dichotomize,
    kfold_split,
    load_csv,
    save_csv,
    schema_from_json,
    schema_to_json,
)


def write_csv(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return str(path)


class TestLoadCsv:
    def test_two_binary_columns(self, tmp_path):
        path = write_csv(tmp_path / "t.csv", ["u,v", "a,x", "b,y", "a,y", "b,x"])
        d = load_csv(path)
        assert d.n == 4 and d.p == 2
        assert d.schema.names == ("u", "v")
        assert d.schema.level_counts == (2, 2)

    def test_levels_are_sorted(self, tmp_path):
        path = write_csv(tmp_path / "t.csv", ["c", "zebra", "apple", "mango"])
        d = load_csv(path)
        assert d.schema.variables[0].levels == ("apple", "mango", "zebra")

    def test_no_header_names(self, tmp_path):
        path = write_csv(tmp_path / "t.csv", ["a,x", "b,y"])
        d = load_csv(path, has_header=False)
        assert d.schema.names == ("X1", "X2")

    def test_empty_cell_names_row_and_column(self, tmp_path):
        path = write_csv(tmp_path / "t.csv", ["u,v", "a,x", "a,", "b,y"])
        with pytest.raises(DataError, match=r"row 2.*'v'"):
            load_csv(path)

    def test_ragged_row_reports_line(self, tmp_path):
        path = write_csv(tmp_path / "t.csv", ["u,v", "a,x", "a,x,y"])
        with pytest.raises(DataError, match="line 3"):
            load_csv(path)

    def test_constant_column_names_it(self, tmp_path):
        path = write_csv(tmp_path / "t.csv", ["u,v", "a,x", "a,y"])
        with pytest.raises(DataError, match="'u'"):
            load_csv(path)

    def test_survey_shaped_file(self, tmp_path):
        rng = np.random.default_rng(0)
        rows = rng.integers(0, 2, size=(9720, 7))
        lines = [",".join(f"q{j}" for j in range(7))]
        lines += [",".join("hi" if c else "lo" for c in row) for row in rows]
        d = load_csv(write_csv(tmp_path / "survey.csv", lines))
        assert d.n == 9720 and d.p == 7

    def test_decode_round_trip(self, tmp_path):
        lines = ["u,v", "a,x", "b,y", "a,y"]
        d = load_csv(write_csv(tmp_path / "t.csv", lines))
        assert d.decode() == [line.split(",") for line in lines[1:]]

    def test_save_load_round_trip(self, tmp_path):
        d = load_csv(write_csv(tmp_path / "t.csv", ["u,v", "a,x", "b,y", "a,y"]))
        out = tmp_path / "copy.csv"
        save_csv(d, str(out))
        again = load_csv(str(out))
        assert again.schema == d.schema
        assert np.array_equal(again.rows, d.rows)


@settings(max_examples=50, deadline=None)
@given(
    table=st.lists(
        st.tuples(st.sampled_from("abc"), st.sampled_from("xyz")),
        min_size=2,
        max_size=30,
    )
)
def test_encode_decode_round_trip(tmp_path_factory, table):
    # need both columns non-constant
    if len({r[0] for r in table}) < 2 or len({r[1] for r in table}) < 2:
        return
    path = tmp_path_factory.mktemp("csv") / "t.csv"
    lines = ["u,v"] + [",".join(row) for row in table]
    d = load_csv(write_csv(path, lines))
    assert d.decode() == [list(row) for row in table]


class TestBootstrap:
    def test_single_row_is_identity(self):
        schema = Schema((Variable("u", ("a", "b")), Variable("v", ("x", "y"))))
        d = Dataset(schema, np.array([[1, 0]]))
        rep = bootstrap_replicate(d, seed=99)
        assert np.array_equal(rep.rows, d.rows)

    def test_deterministic(self):
        rng = np.random.default_rng(3)
        schema = Schema((Variable("u", ("a", "b")),))
        d = Dataset(schema, rng.integers(0, 2, size=(50, 1)))
        r1 = bootstrap_replicate(d, seed=5)
        r2 = bootstrap_replicate(d, seed=5)
        assert np.array_equal(r1.rows, r2.rows)

    def test_rows_drawn_from_original(self):
        rng = np.random.default_rng(1)
        schema = Schema((Variable("u", ("a", "b", "c")), Variable("v", ("x", "y"))))
        d = Dataset(schema, np.column_stack([rng.integers(0, 3, 1000), rng.integers(0, 2, 1000)]))
        rep = bootstrap_replicate(d, seed=7)
        original = {tuple(row) for row in d.rows}
        assert all(tuple(row) in original for row in rep.rows)

    @settings(max_examples=25, deadline=None)
    @given(n=st.integers(2, 200), seed=st.integers(0, 2**32 - 1))
    def test_preserves_n_and_schema(self, n, seed):
        rng = np.random.default_rng(seed)
        schema = Schema((Variable("u", ("a", "b")), Variable("v", ("x", "y", "z"))))
        d = Dataset(schema, np.column_stack([rng.integers(0, 2, n), rng.integers(0, 3, n)]))
        rep = bootstrap_replicate(d, seed)
        assert rep.n == d.n and rep.schema == d.schema


class TestKfold:
    def make(self, n):
        rng = np.random.default_rng(0)
        schema = Schema((Variable("u", ("a", "b")),))
        rows = rng.integers(0, 2, size=(n, 1))
        rows[0, 0], rows[1, 0] = 0, 1
        return Dataset(schema, rows)

    def test_leave_one_out_shape(self):
        folds = kfold_split(self.make(10), 10, seed=0)
        assert [t.n for _, t in folds] == [1] * 10

    def test_survey_sized_folds(self):
        folds = kfold_split(self.make(9720), 10, seed=1)
        assert [t.n for _, t in folds] == [972] * 10

    @settings(max_examples=25, deadline=None)
    @given(n=st.integers(4, 60), k=st.integers(2, 10), seed=st.integers(0, 1000))
    def test_partition_property(self, n, k, seed):
        if k > n:
            return
        d = self.make(n)
        folds = kfold_split(d, k, seed)
        sizes = [t.n for _, t in folds]
        assert max(sizes) - min(sizes) <= 1
        assert sum(sizes) == n
        for train, test in folds:
            assert train.n + test.n == n

    def test_k_larger_than_n_rejected(self):
        with pytest.raises(DataError):
            kfold_split(self.make(5), 6, seed=0)

    def test_k_below_two_rejected(self):
        with pytest.raises(DataError):
            kfold_split(self.make(5), 1, seed=0)


class TestDichotomize:
    def test_even_split(self):
        assert dichotomize([1, 2, 3, 4]) == ["low", "low", "high", "high"]

    def test_ties_go_low(self):
        assert dichotomize([5, 5, 9]) == ["low", "low", "high"]

    def test_constant_rejected(self):
        with pytest.raises(DataError):
            dichotomize([3, 3, 3])

    def test_skewed_column_rejected(self):
        with pytest.raises(DataError):
            dichotomize([1, 2, 2])

    def test_custom_labels(self):
        assert dichotomize([0.0, 10.0], labels=("cold", "hot")) == ["cold", "hot"]


class TestSeedsAndSchema:
    def test_derived_seed_deterministic_and_distinct(self):
        a = derived_seed(42, 0)
        assert a == derived_seed(42, 0)
        assert len({derived_seed(42, i) for i in range(100)}) == 100

    def test_schema_json_round_trip(self):
        schema = Schema((Variable("u", ("a", "b")), Variable("v", ("x", "y", "z"))))
        assert schema_from_json(schema_to_json(schema)) == schema

    def test_duplicate_names_rejected(self):
        with pytest.raises(DataError):
            Schema((Variable("u", ("a", "b")), Variable("u", ("x", "y"))))

    def test_single_level_rejected(self):
        with pytest.raises(DataError):
            Variable("u", ("a",))

    def test_out_of_range_cell_rejected(self):
        schema = Schema((Variable("u", ("a", "b")),))
        with pytest.raises(DataError):
            Dataset(schema, np.array([[2]]))

    def test_rows_are_immutable(self):
        schema = Schema((Variable("u", ("a", "b")),))
        d = Dataset(schema, np.array([[0], [1]]))
        with pytest.raises(ValueError):
            d.rows[0, 0] = 1
