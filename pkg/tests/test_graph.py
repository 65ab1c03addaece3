import json

import numpy as np
import pytest

from qgat.graph import (
    DatasetError, MolecularGraph, filter_and_sample, graph_to_record, load_dataset, load_fixture,
    normalize, summarize,
)


def write_jsonl(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")
    return path


def record(gid="m0", n=3, width=7, **extra):
    rec = {"id": gid, "features": [[float(i + k) for k in range(width)] for i in range(n)],
           "edges": [[i, i + 1] for i in range(n - 1)], "target": -0.25}
    rec.update(extra)
    return rec


class TestLoad:
    def test_seven_wide(self, tmp_path):
        (g,) = load_dataset(write_jsonl(tmp_path / "d.jsonl", [record()]))
        assert g.num_atoms == 3
        assert g.features.shape == (3, 7)
        assert g.target == -0.25

    def test_eleven_wide_selects_columns(self, tmp_path):
        (g,) = load_dataset(write_jsonl(tmp_path / "d.jsonl", [record(width=11)]))
        np.testing.assert_array_equal(g.features[0], [0, 1, 2, 3, 4, 5, 10])

    def test_edges_symmetrised(self, tmp_path):
        (g,) = load_dataset(write_jsonl(tmp_path / "d.jsonl", [record(edges=[[0, 2]])]))
        assert g.adjacency[0, 2] and g.adjacency[2, 0]
        assert g.directed_edges() == [(0, 2), (2, 0)]
        assert g.neighbors(1).size == 0

    def test_dense_adjacency(self, tmp_path):
        rec = record(n=2)
        del rec["edges"]
        rec["adjacency"] = [[0, 1], [1, 0]]
        (g,) = load_dataset(write_jsonl(tmp_path / "d.jsonl", [rec]))
        assert g.neighbors(0).tolist() == [1]

    def test_asymmetric_adjacency_rejected(self, tmp_path):
        rec = record(n=2)
        del rec["edges"]
        rec["adjacency"] = [[0, 1], [0, 0]]
        with pytest.raises(DatasetError, match="line 1: adjacency is not symmetric"):
            load_dataset(write_jsonl(tmp_path / "d.jsonl", [rec]))

    def test_bad_line_number_reported(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text(json.dumps(record("a")) + "\n\n" + '{"id": "b", "features": [[1,2]]\n')
        with pytest.raises(DatasetError) as err:
            load_dataset(path)
        assert err.value.line == 3

    @pytest.mark.parametrize("width", [6, 8, 10])
    def test_bad_width(self, tmp_path, width):
        with pytest.raises(DatasetError, match="width"):
            load_dataset(write_jsonl(tmp_path / "d.jsonl", [record(width=width)]))

    def test_edge_out_of_range(self, tmp_path):
        with pytest.raises(DatasetError, match="out of range"):
            load_dataset(write_jsonl(tmp_path / "d.jsonl", [record(edges=[[0, 5]])]))

    def test_self_loop(self, tmp_path):
        with pytest.raises(DatasetError, match="self-loop"):
            load_dataset(write_jsonl(tmp_path / "d.jsonl", [record(edges=[[1, 1]])]))

    def test_duplicate_ids(self, tmp_path):
        with pytest.raises(DatasetError, match="line 2: duplicate"):
            load_dataset(write_jsonl(tmp_path / "d.jsonl", [record("x"), record("x")]))

    def test_empty_file(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text("\n")
        with pytest.raises(DatasetError, match="no records"):
            load_dataset(path)

    def test_target_key(self, tmp_path):
        rec = record(targets={"homo": -7.5})
        (g,) = load_dataset(write_jsonl(tmp_path / "d.jsonl", [rec]), target_key="homo")
        assert g.target == -7.5
        with pytest.raises(DatasetError, match="targets"):
            load_dataset(write_jsonl(tmp_path / "e.jsonl", [rec]), target_key="gap")

    def test_record_round_trip(self, tmp_path):
        (g,) = load_dataset(write_jsonl(tmp_path / "d.jsonl", [record(n=4)]))
        (h,) = load_dataset(write_jsonl(tmp_path / "e.jsonl", [graph_to_record(g)]))
        np.testing.assert_array_equal(g.features, h.features)
        np.testing.assert_array_equal(g.adjacency, h.adjacency)


class TestFixture:
    def test_size_and_range(self):
        graphs = load_fixture()
        info = summarize(graphs)
        assert info["count"] >= 200
        assert info["max_atoms"] == 25
        assert min(info["size_histogram"]) >= 1

    def test_every_bucket_has_40(self):
        graphs = load_fixture()
        for bucket in (9, 16, 20, 25):
            assert sum(g.num_atoms <= bucket for g in graphs) >= 40

    def test_targets_not_degenerate(self):
        targets = [g.target for g in load_fixture()]
        assert len(set(targets)) > 0.9 * len(targets)

    def test_alternative_targets(self):
        homo = load_fixture("homo")
        assert len(homo) == len(load_fixture())


class TestSampling:
    def test_deterministic(self):
        graphs = load_fixture()
        a = filter_and_sample(graphs, 16, 10, seed=3)
        b = filter_and_sample(graphs, 16, 10, seed=3)
        assert a.ids == b.ids
        assert all(g.num_atoms <= 16 for g in a.graphs)
        assert len(set(a.ids)) == 10

    def test_seed_changes_sample(self):
        graphs = load_fixture()
        assert filter_and_sample(graphs, 25, 10, 0).ids != filter_and_sample(graphs, 25, 10, 1).ids

    def test_not_enough(self):
        with pytest.raises(DatasetError, match="only"):
            filter_and_sample(load_fixture(), 1, 500, 0)


class TestNormalize:
    def _split(self):
        feats = [np.array([[0.0, 1, 2, 3, 4, 5, 6], [2.0, 1, 4, 3, 4, 5, 8]]),
                 np.array([[1.0, 1, 3, 3, 4, 5, 7]])]
        graphs = [MolecularGraph("a", feats[0], [[0, 1], [1, 0]], 10.0),
                  MolecularGraph("b", feats[1], [[0]], 14.0)]
        return filter_and_sample(graphs, 5, 2, 0)

    def test_endpoints(self):
        out = normalize(self._split())
        stacked = np.vstack([g.features for g in out.graphs])
        np.testing.assert_allclose(stacked[:, 0].min(), 0.0)
        np.testing.assert_allclose(stacked[:, 0].max(), np.pi)
        assert sorted(out.targets.tolist()) == [0.0, 1.0]

    def test_constant_columns_are_zero(self):
        out = normalize(self._split())
        stacked = np.vstack([g.features for g in out.graphs])
        for col in (1, 3, 4, 5):
            assert (stacked[:, col] == 0).all()

    def test_target_round_trip(self):
        split = self._split()
        out = normalize(split)
        back = out.normalization.invert_target(out.targets)
        assert np.abs(back - split.targets).max() <= 1e-12

    def test_reuses_record(self):
        split = self._split()
        first = normalize(split)
        again = normalize(split, first.normalization)
        np.testing.assert_array_equal(again.targets, first.targets)

    def test_fixture_split_round_trip(self):
        split = filter_and_sample(load_fixture(), 20, 30, 0)
        out = normalize(split)
        assert np.abs(out.normalization.invert_target(out.targets) - split.targets).max() <= 1e-12
        stacked = np.vstack([g.features for g in out.graphs])
        assert stacked.min() >= 0 and stacked.max() <= np.pi + 1e-12


class TestMolecularGraph:
    def test_rejects_self_loop(self):
        with pytest.raises(DatasetError):
            MolecularGraph("x", np.zeros((1, 7)), [[1]], 0.0)

    def test_rejects_nan(self):
        with pytest.raises(DatasetError):
            MolecularGraph("x", np.full((1, 7), np.nan), [[0]], 0.0)

    def test_immutable_arrays(self):
        g = MolecularGraph("x", np.zeros((1, 7)), [[0]], 0.0)
        with pytest.raises(ValueError):
            g.features[0, 0] = 1.0
