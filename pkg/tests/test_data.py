import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dtmp.data import (
    PlantedEdge,
    SyntheticSpec,
    TrafficSeries,
    denormalize,
    load_dataset,
    normalize,
    read_ground_truth,
    split_and_window,
    synth_generate,
    write_dataset,
    write_ground_truth,
)


def write_table(tmp_path, rows, n_nodes, n_steps, header=None):
    header = header or ",".join(f"node_{i}" for i in range(n_nodes))
    (tmp_path / "d.csv").write_text(header + "\n" + "\n".join(rows) + "\n")
    meta = {"name": "t", "num_nodes": n_nodes, "num_steps": n_steps, "steps_per_day": 288, "period": "p"}
    (tmp_path / "m.json").write_text(json.dumps(meta))
    return tmp_path / "d.csv", tmp_path / "m.json"


def lagged_xcorr_argmax(src, dst, max_lag):
    """Lag maximizing the Pearson correlation of dst(t) with src(t - lag)."""
    best, best_r = 0, -np.inf
    for lag in range(max_lag + 1):
        a, b = src[: len(src) - lag], dst[lag:]
        r = np.corrcoef(a, b)[0, 1]
        if r > best_r:
            best, best_r = lag, r
    return best


class TestLoad:
    def test_shape(self, tmp_path):
        d, m = write_table(tmp_path, ["1,2,3", "4,5,6", "7,8,9", "10,11,12"], 3, 4)
        s = load_dataset(d, m)
        assert s.values.shape == (4, 3, 1)
        assert s.values[3, 1, 0] == 11 and s.steps_per_day == 288 and s.name == "t"

    def test_interior_gap_interpolated(self, tmp_path):
        d, m = write_table(tmp_path, ["2,1", ",1", "4,1"], 2, 3)
        assert load_dataset(d, m).values[:, 0, 0].tolist() == [2.0, 3.0, 4.0]

    def test_nan_token_interpolated(self, tmp_path):
        d, m = write_table(tmp_path, ["0", "nan", "nan", "3"], 1, 4)
        np.testing.assert_allclose(load_dataset(d, m).values[:, 0, 0], [0, 1, 2, 3])

    def test_ragged_row(self, tmp_path):
        d, m = write_table(tmp_path, ["1,2", "3"], 2, 2)
        with pytest.raises(ValueError, match="ragged"):
            load_dataset(d, m)

    def test_non_numeric(self, tmp_path):
        d, m = write_table(tmp_path, ["1,2", "3,abc"], 2, 2)
        with pytest.raises(ValueError, match="non-numeric"):
            load_dataset(d, m)

    def test_all_missing_column(self, tmp_path):
        d, m = write_table(tmp_path, ["1,", "3,"], 2, 2)
        with pytest.raises(ValueError, match="no numeric"):
            load_dataset(d, m)

    @pytest.mark.parametrize("nodes, steps, match", [(3, 2, "nodes"), (2, 5, "steps")])
    def test_metadata_mismatch(self, tmp_path, nodes, steps, match):
        d, m = write_table(tmp_path, ["1,2", "3,4"], nodes, steps, header="a,b")
        with pytest.raises(ValueError, match=match):
            load_dataset(d, m)

    def test_pems_sized_metadata_accepts_only_matching_table(self, tmp_path):
        d, m = write_table(tmp_path, ["1,2"] * 3, 2, 16992, header="a,b")
        with pytest.raises(ValueError, match="16992"):
            load_dataset(d, m)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 10_000), st.integers(1, 6), st.integers(1, 20))
    def test_round_trip(self, tmp_path_factory, seed, n, t):
        path = tmp_path_factory.mktemp("rt")
        s = TrafficSeries(np.random.default_rng(seed).normal(size=(t, n, 1)) * 100, steps_per_day=96,
                          name="x", period="p")
        write_dataset(s, path / "d.csv", path / "m.json")
        back = load_dataset(path / "d.csv", path / "m.json")
        np.testing.assert_array_equal(back.values, s.values)
        assert back.steps_per_day == 96


class TestWindows:
    def test_counting_rule(self):
        with pytest.warns(RuntimeWarning, match="empty"):
            ds = split_and_window(TrafficSeries(np.arange(100.0).reshape(100, 1)), 12, 12)
        assert len(ds["train"]) == 37
        assert len(ds["validation"]) == 0 and ds["validation"].x.shape == (0, 12, 1, 1)
        assert ds.bounds == {"train": (0, 60), "validation": (60, 80), "test": (80, 100)}

    def test_default_synthetic_counts(self):
        ds = split_and_window(TrafficSeries(np.zeros((3000, 2))), 12, 12)
        assert [len(ds[s]) for s in ("train", "validation", "test")] == [1777, 577, 577]

    @pytest.mark.parametrize("t, h", [(12, 0), (0, 12)])
    def test_rejects_empty_window(self, t, h):
        with pytest.raises(ValueError):
            split_and_window(TrafficSeries(np.zeros((100, 1))), t, h)

    def test_train_split_too_short(self):
        with pytest.raises(ValueError, match="train split"):
            split_and_window(TrafficSeries(np.zeros((30, 1))), 12, 12)

    def test_bad_ratios(self):
        with pytest.raises(ValueError, match="ratios"):
            split_and_window(TrafficSeries(np.zeros((100, 1))), 2, 2, (0.5, 0.5, 0.5))

    def test_windows_are_contiguous_and_overlap(self):
        ds = split_and_window(TrafficSeries(np.arange(100.0).reshape(100, 1)), 4, 3)
        w = ds["validation"]
        full = np.concatenate([w.x[:, :, 0, 0], w.y[:, :, 0, 0]], axis=1)
        np.testing.assert_array_equal(np.diff(full, axis=1), 1.0)
        np.testing.assert_array_equal(full[0], np.arange(60, 67))
        np.testing.assert_array_equal(full[1, :-1], full[0, 1:])  # overlap of T+T'-1

    @given(st.integers(60, 300), st.integers(1, 6), st.integers(1, 6))
    def test_chronological_and_lossless(self, total, t, h):
        ds = split_and_window(TrafficSeries(np.arange(float(total)).reshape(total, 1)), t, h)
        last = {}
        for name in ("train", "validation", "test"):
            w = ds[name]
            lo, hi = ds.bounds[name]
            seen = np.unique(np.concatenate([w.x.ravel(), w.y.ravel()]))
            np.testing.assert_array_equal(seen, np.arange(lo, hi))
            last[name] = (seen.min(), seen.max())
        assert last["train"][1] < last["validation"][0] and last["validation"][1] < last["test"][0]
        sizes = [ds.bounds[n][1] - ds.bounds[n][0] for n in ("train", "validation", "test")]
        assert abs(sizes[0] - 0.6 * total) <= 1 and abs(sizes[1] - 0.2 * total) <= 1


class TestNormalize:
    def setup_method(self):
        rng = np.random.default_rng(0)
        self.ds = split_and_window(TrafficSeries(rng.normal(5, 3, (200, 4, 2))), 6, 6)

    def test_inverse(self):
        n = normalize(self.ds)
        for split in ("train", "test"):
            np.testing.assert_allclose(denormalize(n[split].x, n.stats), self.ds[split].x, rtol=0, atol=1e-12)

    def test_train_centered(self):
        n = normalize(self.ds)
        np.testing.assert_allclose(n.segments["train"].reshape(-1, 2).mean(axis=0), 0.0, atol=1e-9)
        np.testing.assert_allclose(n.segments["train"].reshape(-1, 2).std(axis=0), 1.0, atol=1e-9)

    def test_uses_train_statistics_only(self):
        n = normalize(self.ds)
        np.testing.assert_allclose(n.stats.mean, self.ds.segments["train"].reshape(-1, 2).mean(axis=0))

    def test_constant_channel_warns_and_passes_through(self):
        values = np.random.default_rng(1).normal(size=(100, 3, 2))
        values[..., 1] = 7.0
        ds = split_and_window(TrafficSeries(values), 4, 4)
        with pytest.warns(RuntimeWarning, match="constant"):
            n = normalize(ds)
        np.testing.assert_array_equal(n["train"].x[..., 1], ds["train"].x[..., 1])

    def test_idempotent(self):
        n = normalize(self.ds)
        assert normalize(n) is n


class TestSynthetic:
    def test_zero_noise_exact_copy(self):
        spec = SyntheticSpec(n_nodes=2, n_steps=200, n_sources=1, edges=[PlantedEdge(0, 1, 2, 1.0)], noise=0.0)
        s, _ = synth_generate(spec, seed=3)
        v = s.values[:, :, 0]
        np.testing.assert_allclose(v[2:, 1], v[:-2, 0], atol=1e-12)

    def test_weight_scales_deviation(self):
        spec = SyntheticSpec(n_nodes=2, n_steps=100, n_sources=1, edges=[PlantedEdge(0, 1, 1, 0.5)], noise=0.0)
        v = synth_generate(spec, seed=0)[0].values[:, :, 0] - spec.level
        np.testing.assert_allclose(v[1:, 1], 0.5 * v[:-1, 0], atol=1e-12)

    def test_seeded(self):
        a, _ = synth_generate(SyntheticSpec(n_steps=300), seed=5)
        b, _ = synth_generate(SyntheticSpec(n_steps=300), seed=5)
        c, _ = synth_generate(SyntheticSpec(n_steps=300), seed=6)
        np.testing.assert_array_equal(a.values, b.values)
        assert not np.array_equal(a.values, c.values)

    def test_default_layout(self):
        spec = SyntheticSpec()
        assert spec.n_nodes == 12 and spec.n_steps == 3000
        assert {e.lag for e in spec.edges} == {1, 2, 4}
        assert {e.src for e in spec.edges} == {0, 1}
        assert {e.dst for e in spec.edges} == set(range(2, 12))

    @pytest.mark.parametrize("noise", [0.0, 0.02, 0.05])
    def test_cross_correlation_recovers_lag(self, noise):
        edges = [PlantedEdge(0, 2, 1, 1.0), PlantedEdge(1, 3, 2, 0.9), PlantedEdge(0, 4, 4, 0.8),
                 PlantedEdge(1, 5, 3, 1.0)]
        spec = SyntheticSpec(n_nodes=6, n_steps=2000, n_sources=2, edges=edges, noise=noise)
        s, truth = synth_generate(spec, seed=7)
        v = s.values[:, :, 0]
        for e in truth:
            assert lagged_xcorr_argmax(v[:, e.src], v[:, e.dst], 8) == e.lag

    @pytest.mark.parametrize("edge", [PlantedEdge(0, 1, 0, 1.0), PlantedEdge(0, 1, 1, 1.5),
                                      PlantedEdge(0, 0, 1, 1.0), PlantedEdge(0, 9, 1, 1.0),
                                      PlantedEdge(0, 1, 50, 1.0)])
    def test_invalid_edges(self, edge):
        with pytest.raises(ValueError):
            SyntheticSpec(n_nodes=3, n_steps=50, n_sources=1, edges=[edge])

    def test_cycle_rejected(self):
        with pytest.raises(ValueError, match="cycle"):
            SyntheticSpec(n_nodes=3, n_sources=1, edges=[PlantedEdge(1, 2, 1, 1.0), PlantedEdge(2, 1, 1, 1.0)])

    def test_spec_round_trip(self):
        spec = SyntheticSpec(noise=0.3)
        assert SyntheticSpec.from_dict(json.loads(json.dumps(spec.to_dict()))) == spec

    def test_ground_truth_round_trip(self, tmp_path):
        edges = SyntheticSpec().edges
        write_ground_truth(edges, tmp_path / "g.csv")
        assert read_ground_truth(tmp_path / "g.csv") == edges
        assert (tmp_path / "g.csv").read_text().splitlines()[0] == "src,dst,lag,weight"


def test_series_rejects_non_finite():
    with pytest.raises(ValueError, match="non-finite"):
        TrafficSeries(np.array([[1.0, np.inf]]))


def test_no_warning_for_regular_data():
    ds = split_and_window(TrafficSeries(np.random.default_rng(2).normal(size=(60, 2))), 3, 3)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        normalize(ds)
