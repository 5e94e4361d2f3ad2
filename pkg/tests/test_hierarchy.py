import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hiforead.hierarchy import (
    HierarchyError,
    aggregate_bottom_up,
    build_hierarchy,
    check_coherence,
    load_hierarchy_csv,
    summing_matrix,
)

from _helpers import SMALL_EDGES, small_tree, hierarchies, parent_chain_oracle, random_hierarchy


def test_small_tree_levels():
    h = small_tree()
    assert h.K == 3
    assert h.level_sizes == [1, 2, 5]
    assert h.nodes == ("Total", "X", "Y", "XA", "XB", "XC", "YA", "YB")
    assert h.leaves == ("XA", "XB", "XC", "YA", "YB")


def test_minimal_tree():
    h = build_hierarchy([("R", "A")])
    assert h.K == 2
    assert h.level_sizes == [1, 1]


def test_order_follows_input_within_level():
    h = build_hierarchy([("R", "b"), ("R", "a"), ("b", "b1"), ("a", "a1")])
    assert h.nodes_at(2) == ("b", "a")
    assert h.nodes_at(3) == ("b1", "a1")


@pytest.mark.parametrize(
    "edges, message",
    [
        ([("A", "B"), ("B", "A")], "cycle"),
        ([("A", "A")], "cycle"),
        ([("R", "A"), ("A", "B"), ("B", "C"), ("C", "A")], "duplicate parent"),
        ([("R", "A"), ("Q", "A")], "duplicate parent"),
        ([("R", "A"), ("Q", "B")], "multiple roots"),
        ([("R", "A"), ("R", "B"), ("A", "A1")], "unbalanced"),
        ([], "empty"),
    ],
)
def test_build_errors(edges, message):
    with pytest.raises(HierarchyError, match=message):
        build_hierarchy(edges)


def test_cycle_detached_from_root():
    with pytest.raises(HierarchyError, match="cycle"):
        build_hierarchy([("R", "A"), ("B", "C"), ("C", "B")])


def test_orphan_node():
    with pytest.raises(HierarchyError, match="orphan"):
        build_hierarchy([("R", "A")], nodes=["R", "A", "Z"])


def test_summing_matrix_small_tree():
    S = summing_matrix(small_tree())
    assert S.shape == (8, 5)
    assert S[0].tolist() == [1, 1, 1, 1, 1]
    assert S[1].tolist() == [1, 1, 1, 0, 0]
    assert S[2].tolist() == [0, 0, 0, 1, 1]
    np.testing.assert_array_equal(S[3:], np.eye(5, dtype=int))


def test_summing_matrix_small_cases():
    assert summing_matrix(build_hierarchy([("R", "A")])).tolist() == [[1], [1]]
    S = summing_matrix(build_hierarchy([("R", "a"), ("R", "b"), ("R", "c")]))
    assert S[0].tolist() == [1, 1, 1]
    np.testing.assert_array_equal(S[1:], np.eye(3, dtype=int))


def test_summing_matrix_is_read_only():
    S = summing_matrix(small_tree())
    with pytest.raises(ValueError):
        S[0, 0] = 5


@given(hierarchies())
@settings(max_examples=60, deadline=None)
def test_summing_matrix_matches_descendant_oracle(h):
    S = summing_matrix(h)
    below = parent_chain_oracle(h)
    for i, node in enumerate(h.nodes):
        for j, leaf in enumerate(h.leaves):
            assert S[i, j] == (leaf in below[node])


@given(hierarchies())
@settings(max_examples=60, deadline=None)
def test_summing_matrix_rows_add_up(h):
    S = summing_matrix(h)
    for node in h.nodes:
        kids = h.children.get(node)
        if kids:
            assert S[h.index[node]].tolist() == S[[h.index[c] for c in kids]].sum(axis=0).tolist()
    assert set(np.unique(S)) <= {0, 1}
    assert sum(h.level_sizes) == len(h.nodes)
    assert len(h.leaves) == h.level_sizes[-1]


def test_aggregate_constant_leaves():
    h = small_tree()
    out = aggregate_bottom_up(h, {leaf: np.ones(4) for leaf in h.leaves})
    np.testing.assert_array_equal(out["Total"], np.full(4, 5.0))
    np.testing.assert_array_equal(out["Y"], np.full(4, 2.0))


def test_aggregate_chain_is_identity():
    h = build_hierarchy([("R", "M"), ("M", "L")])
    v = np.array([1.5, -2.0, 3.25])
    out = aggregate_bottom_up(h, {"L": v})
    np.testing.assert_array_equal(out["R"], v)


def test_aggregate_errors():
    h = small_tree()
    with pytest.raises(HierarchyError, match="missing"):
        aggregate_bottom_up(h, {"XA": np.ones(3)})
    vals = {leaf: np.ones(3) for leaf in h.leaves}
    vals["YB"] = np.ones(4)
    with pytest.raises(HierarchyError, match="length mismatch"):
        aggregate_bottom_up(h, vals)


@given(hierarchies(), st.integers(0, 2**32 - 1))
@settings(max_examples=60, deadline=None)
def test_aggregate_matches_descendant_sums(h, seed):
    rng = np.random.default_rng(seed)
    leaves = {leaf: rng.normal(size=6) * 10 ** rng.uniform(-3, 6) for leaf in h.leaves}
    out = aggregate_bottom_up(h, leaves)
    below = parent_chain_oracle(h)
    for node in h.nodes:
        expected = np.sum([leaves[leaf] for leaf in h.leaves if leaf in below[node]], axis=0)
        np.testing.assert_allclose(out[node], expected, rtol=1e-12, atol=1e-9)
    # exact coherence: parents are built from the same left-to-right sums
    report = check_coherence(h, out, tolerance=0.0)
    assert report.coherent and report.max_abs_violation == 0.0


def test_perturbed_child_reported():
    h = small_tree()
    vals = aggregate_bottom_up(h, {leaf: np.full(3, 10.0) for leaf in h.leaves})
    vals["XB"] = vals["XB"] + np.array([0.0, 1.0, 0.0])
    rep = check_coherence(h, vals, tolerance=1e-8, relative=False)
    assert not rep.coherent
    assert rep.violations == [("X", 1, 1.0)]
    assert rep.max_abs_violation == 1.0


def test_relative_tolerance_scales_with_parent():
    h = build_hierarchy([("R", "a"), ("R", "b")])
    vals = {"R": np.array([1e9]), "a": np.array([5e8]), "b": np.array([5e8 + 1.0])}
    assert check_coherence(h, vals, tolerance=1e-8).coherent  # 1 <= 1e-8 * 1e9
    assert not check_coherence(h, vals, tolerance=1e-8, relative=False).coherent


def test_coherence_counts_nan():
    h = build_hierarchy([("R", "a"), ("R", "b")])
    vals = {"R": np.array([2.0]), "a": np.array([np.nan]), "b": np.array([1.0])}
    rep = check_coherence(h, vals)
    assert not rep.coherent
    assert rep.max_abs_violation == np.inf


def test_coherence_errors():
    h = small_tree()
    with pytest.raises(HierarchyError, match="missing"):
        check_coherence(h, {"Total": np.ones(2)})
    with pytest.raises(ValueError):
        check_coherence(h, {n: np.ones(2) for n in h.nodes}, tolerance=-1.0)


def test_coherence_report_to_dict():
    h = small_tree()
    vals = aggregate_bottom_up(h, {leaf: np.ones(2) for leaf in h.leaves})
    vals["Total"] = vals["Total"] + 3.0
    d = check_coherence(h, vals).to_dict()
    assert d["coherent"] is False
    assert d["n_violations"] == 2
    assert d["violations"][0] == {"parent": "Total", "step": 0, "abs_violation": 3.0}


def test_truncate():
    h = small_tree().truncate(2)
    assert h.K == 2
    assert h.leaves == ("X", "Y")
    assert summing_matrix(h).tolist() == [[1, 1], [1, 0], [0, 1]]
    with pytest.raises(HierarchyError):
        small_tree().truncate(4)


def test_descendants():
    h = small_tree()
    assert h.descendants("X") == ["XA", "XB", "XC"]
    assert h.descendants("Total") == list(h.nodes[1:])
    assert h.leaf_descendants("YA") == ["YA"]


def test_load_csv(tmp_path):
    path = tmp_path / "h.csv"
    path.write_text("parent_id,child_id\n" + "\n".join(f"{p},{c}" for p, c in SMALL_EDGES) + "\n")
    h = load_hierarchy_csv(path)
    assert h.nodes == small_tree().nodes
    assert h.edges() == [(p, c) for p, c in SMALL_EDGES]


def test_load_csv_requires_header(tmp_path):
    path = tmp_path / "h.csv"
    path.write_text("Total,X\n")
    with pytest.raises(HierarchyError, match="header"):
        load_hierarchy_csv(path)


def test_load_csv_malformed_row(tmp_path):
    path = tmp_path / "h.csv"
    path.write_text("parent_id,child_id\nTotal,X\nTotal\n")
    with pytest.raises(HierarchyError, match=":3:"):
        load_hierarchy_csv(path)


def test_random_hierarchy_bounds():
    rng = np.random.default_rng(3)
    for _ in range(200):
        h = random_hierarchy(rng)
        assert 2 <= h.K <= 4
        assert 1 <= len(h.leaves) <= 10
