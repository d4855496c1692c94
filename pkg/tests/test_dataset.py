import numpy as np
import pytest

from gridcaps import attack, dataset as ds, grid
from gridcaps.errors import FormatError


@pytest.fixture(scope="module")
def small_gen(tmp_path_factory):
    """One small generated ieee14 dataset reused across tests."""
    windows, labels, gen_idx = ds.generate_samples(
        "ieee14", 36, 123, attack.ScenarioConfig()
    )
    return windows, labels, gen_idx


class TestGeneration:
    def test_shapes_and_labels(self, small_gen, ieee14):
        windows, labels, gen_idx = small_gen
        assert windows.shape == (36, 5, 100, 2)
        assert windows.dtype == np.float32
        assert labels.min() >= 0 and labels.max() < ieee14.topology.n_load
        assert np.array_equal(gen_idx, np.arange(36))

    def test_deterministic_regeneration(self, small_gen):
        windows, labels, _ = small_gen
        w2, l2, _ = ds.generate_samples("ieee14", 36, 123, attack.ScenarioConfig())
        assert np.array_equal(windows, w2)
        assert np.array_equal(labels, l2)

    def test_entry_reproduces_by_index(self, small_gen, ieee14):
        """generate_entry rebuilds the exact scenario behind a stored sample."""
        windows, labels, _ = small_gen
        from gridcaps.sim import to_pmu_window
        for idx in (0, 17, 35):
            scenario, _, traj = ds.generate_entry(
                ieee14, 123, idx, attack.ScenarioConfig()
            )
            win = to_pmu_window(traj).data.astype(np.float32)
            assert np.array_equal(win, windows[idx])
            assert ieee14.topology.load_index(scenario.label_bus) == labels[idx]

    def test_emitted_scenarios_respect_limit(self, ieee14):
        """Power-limit soundness on an emitted batch."""
        cfg = attack.ScenarioConfig()
        p_lv = attack.vulnerable_load_mw(ieee14.topology, cfg)
        for idx in range(8):
            scenario, _, traj = ds.generate_entry(ieee14, 55, idx, cfg)
            assert attack.validate_limit(scenario, traj, p_lv, ieee14.topology.base_mva)

    def test_single_source_per_sample(self, ieee14):
        """Label well-posedness: exactly one feedback row, and it is the label."""
        cfg = attack.ScenarioConfig(kind=attack.MULTI_POINT)
        for idx in range(6):
            scenario, _, _ = ds.generate_entry(ieee14, 56, idx, cfg)
            rows = np.unique(np.nonzero(scenario.gain_pu)[0])
            assert rows.size == 1
            assert ieee14.topology.load_buses[rows[0]] == scenario.label_bus


class TestSplit:
    def test_exact_sizes_2000(self):
        assert ds.exact_split_sizes(2000, (0.8, 0.1, 0.1)) == [1600, 200, 200]
        sizes = ds.exact_split_sizes(37, (0.8, 0.1, 0.1))
        assert sum(sizes) == 37
        assert all(abs(s - 37 * f) <= 1 for s, f in zip(sizes, (0.8, 0.1, 0.1)))

    def test_partition_property(self):
        rng = np.random.default_rng(0)
        labels = rng.integers(0, 9, size=400)
        parts = ds.stratified_split(labels, (0.8, 0.1, 0.1), rng)
        merged = sorted(i for part in parts for i in part)
        assert merged == list(range(400))
        assert [len(p) for p in parts] == [320, 40, 40]

    def test_stratification_balance(self):
        rng = np.random.default_rng(1)
        labels = np.repeat(np.arange(9), 45)          # 405 samples, 45 per class
        parts = ds.stratified_split(labels, (0.8, 0.1, 0.1), rng)
        test_labels = labels[np.array(parts[2])]
        counts = np.bincount(test_labels, minlength=9)
        assert counts.min() >= 3                       # near 45*0.1 each

    def test_same_seed_same_split(self):
        labels = np.tile(np.arange(6), 30)
        a = ds.stratified_split(labels, (0.8, 0.1, 0.1), np.random.default_rng(5))
        b = ds.stratified_split(labels, (0.8, 0.1, 0.1), np.random.default_rng(5))
        assert a == b

    def test_thin_class_falls_back(self):
        labels = np.array([0] * 50 + [1] * 2)
        with pytest.warns(UserWarning, match="fewer than 3"):
            parts = ds.stratified_split(labels, (0.8, 0.1, 0.1), np.random.default_rng(2))
        assert sorted(i for p in parts for i in p) == list(range(52))


class TestContainer:
    def make_dataset(self, n=10, seed=3):
        rng = np.random.default_rng(seed)
        return ds.Dataset(
            windows=rng.random((n, 5, 100, 2)).astype(np.float32),
            labels=rng.integers(0, 9, size=n).astype(np.int64),
            is_attack=np.ones(n, dtype=np.uint8),
            gen_indices=np.arange(n, dtype=np.int64),
            class_map=[4, 5, 7, 9, 10, 11, 12, 13, 14],
            split="train", case="ieee14",
            provenance={"seed": 3, "scenario": attack.ScenarioConfig().to_dict()},
        )

    def test_round_trip_bytes(self, tmp_path):
        data = self.make_dataset()
        p1, p2 = tmp_path / "a.gcap", tmp_path / "b.gcap"
        ds.serialize(data, p1)
        loaded = ds.deserialize(p1)
        ds.serialize(loaded, p2)
        assert p1.read_bytes() == p2.read_bytes()
        assert np.array_equal(loaded.windows, data.windows)
        assert np.array_equal(loaded.labels, data.labels)
        assert loaded.provenance == data.provenance
        assert loaded.class_map == data.class_map

    def test_empty_dataset(self, tmp_path):
        empty = ds.Dataset(
            windows=np.zeros((0, 5, 100, 2), dtype=np.float32),
            labels=np.zeros(0, dtype=np.int64),
            is_attack=np.zeros(0, dtype=np.uint8),
            gen_indices=np.zeros(0, dtype=np.int64),
            class_map=[1, 2], split="test", case="ieee14",
        )
        path = tmp_path / "empty.gcap"
        ds.serialize(empty, path)
        loaded = ds.deserialize(path)
        assert len(loaded) == 0

    def test_corrupt_length_is_format_error(self, tmp_path):
        path = tmp_path / "c.gcap"
        ds.serialize(self.make_dataset(), path)
        raw = bytearray(path.read_bytes())
        path.write_bytes(bytes(raw[:-7]))            # chop the payload
        with pytest.raises(FormatError, match="payload"):
            ds.deserialize(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "d.gcap"
        path.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(FormatError, match="not a dataset"):
            ds.deserialize(path)

    def test_samples_view(self):
        data = self.make_dataset(n=4)
        samples = data.samples
        assert len(samples) == 4
        win, label = samples[2]
        assert win.data.shape == (5, 100, 2)
        assert label == data.labels[2]


def test_build_dataset_split_and_provenance(small_gen, ieee14):
    windows, labels, gen_idx = small_gen
    train, val, test = ds.build_dataset(
        "ieee14", windows, labels, gen_idx, ieee14.class_map, seed=9,
        provenance={"seed": 9},
    )
    assert len(train) + len(val) + len(test) == 36
    assert train.split == "train" and test.split == "test"
    assert train.provenance == {"seed": 9}
    merged = np.sort(np.concatenate([
        train.gen_indices, val.gen_indices, test.gen_indices
    ]))
    assert np.array_equal(merged, np.arange(36))


def test_parallel_generation_merges_deterministically(monkeypatch):
    seq = ds.generate_samples("ieee14", 12, 77, attack.ScenarioConfig())
    monkeypatch.setenv("GRIDCAPS_THREADS", "3")
    par = ds.generate_samples("ieee14", 12, 77, attack.ScenarioConfig())
    assert np.array_equal(seq[0], par[0])
    assert np.array_equal(seq[1], par[1])
