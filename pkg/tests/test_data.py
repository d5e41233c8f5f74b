import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from modforge import data
from modforge.data import SyntheticModality as Mod
from modforge.data import SyntheticSpec
from modforge.errors import ConfigError, FormatError, UsageError

from oracles import linear_classifier_accuracy


def _spec(seed=0, n=500, snrs=(1.0, 0.5), dims=(4, 3), K=3, g=0.0):
    return SyntheticSpec(K, n, tuple(Mod(m, d, s) for m, d, s in zip("avt", dims, snrs)), g, 4, seed)


def test_generation_is_deterministic():
    a, b = data.generate(_spec(7)), data.generate(_spec(7))
    assert a.labels.tobytes() == b.labels.tobytes()
    assert all(a.features[m].tobytes() == b.features[m].tobytes() for m in a.names)
    c = data.generate(_spec(8))
    assert a.features["a"].tobytes() != c.features["a"].tobytes()


def test_generated_values_survive_f32():
    ds = data.generate(_spec(1, g=0.4))
    for x in ds.features.values():
        assert np.array_equal(x, x.astype(np.float32).astype(np.float64))
    assert set(np.unique(ds.labels)) == {0, 1, 2}


def test_spec_validation_names_offending_key():
    with pytest.raises(ConfigError, match="snr"):
        SyntheticSpec(3, 100, (Mod("a", 2, -1.0),))
    with pytest.raises(ConfigError, match="shared_signal_fraction"):
        SyntheticSpec(3, 100, (Mod("a", 2, 1.0),), 1.5)
    with pytest.raises(ConfigError, match="duplicate"):
        SyntheticSpec(3, 100, (Mod("a", 2, 1.0), Mod("a", 3, 1.0)))
    with pytest.raises(ConfigError, match="num_classes"):
        SyntheticSpec(1, 100, (Mod("a", 2, 1.0),))
    with pytest.raises(ConfigError, match="modalities\\[0\\].dim"):
        SyntheticSpec.from_dict({"num_classes": 3, "num_samples": 10,
                                 "modalities": [{"name": "a", "dim": 2.5, "snr": 1}]})


def test_spec_dict_roundtrip():
    s = _spec(4, g=0.25)
    assert SyntheticSpec.from_dict(s.to_dict()) == s


def test_benchmarks_are_registered():
    for name in ("balanced", "imbalanced", "trimodal"):
        s = data.benchmark(name)
        assert (s.num_classes, s.num_samples) == (4, 4000)
    assert [m.snr for m in data.benchmark("imbalanced").modalities] == [3.0, 0.5]
    assert len(data.benchmark("trimodal").modalities) == 3
    with pytest.raises(ConfigError):
        data.benchmark("nope")


def test_split_sizes_and_stratification():
    ds = data.generate(_spec(0, n=1000, K=4))
    sp = data.split(ds, seed=0)
    assert sp.sizes() == {"train": 600, "val": 200, "probe_fit": 100, "probe_eval": 100}
    overall = np.bincount(ds.labels, minlength=4) / ds.num_samples
    for name, size in sp.sizes().items():
        counts = np.bincount(ds.labels[sp[name]], minlength=4)
        assert np.all(np.abs(counts - overall * size) <= 1 + 1e-9)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_splits_are_disjoint_and_cover(seed):
    ds = _SPLIT_DS
    sp = data.split(ds, seed=seed)
    allidx = np.concatenate([sp[n] for n in data.SPLIT_NAMES])
    assert len(np.unique(allidx)) == len(allidx) == ds.num_samples


_SPLIT_DS = data.generate(_spec(2, n=250, K=3))


def test_split_rejects_bad_fractions():
    ds = data.generate(_spec(0, n=50))
    with pytest.raises(ConfigError):
        data.split(ds, (0.7, 0.3, 0.2, 0.0))
    with pytest.raises(ConfigError):
        data.split(ds, (0.5, 0.5))


def test_batches_keep_partial_tail():
    ds = data.generate(_spec(0, n=200))
    idx = np.arange(100)
    sizes = [len(y) for _, y in data.batches(ds, idx, 64, [0, 0])]
    assert sizes == [64, 36]
    seen = np.concatenate([y for _, y in data.batches(ds, idx, 64, [0, 0])])
    assert sorted(seen.tolist()) == sorted(ds.labels[idx].tolist())
    first = [y.tobytes() for _, y in data.batches(ds, idx, 64, [0, 0])]
    other = [y.tobytes() for _, y in data.batches(ds, idx, 64, [0, 1])]
    assert first == [y.tobytes() for _, y in data.batches(ds, idx, 64, [0, 0])] and first != other
    with pytest.raises(UsageError):
        next(data.batches(ds, [], 64, 0))


def test_mmds_roundtrip(tmp_path):
    ds = data.generate(_spec(3))
    path = tmp_path / "d.mmds"
    data.save(ds, path)
    back = data.load(path)
    assert back.labels.tobytes() == ds.labels.tobytes()
    assert all(back.features[m].tobytes() == ds.features[m].tobytes() for m in ds.names)
    assert back.provenance == json.loads(json.dumps(ds.provenance))


def test_mmds_truncation_reports_offset():
    buf = data.dumps(data.generate(_spec(3, n=20)))
    for cut in (3, 15, 40, len(buf) - 1):
        with pytest.raises(FormatError, match="offset"):
            data.loads(buf[:cut])
    with pytest.raises(FormatError):
        data.loads(b"XXXX" + buf[4:])
    with pytest.raises(FormatError, match="trailing"):
        data.loads(buf + b"\0")


def test_mmds_hand_written_fixture():
    header = json.dumps({"num_samples": 2, "num_classes": 3,
                         "modalities": [{"name": "a", "dim": 2}, {"name": "v", "dim": 1}],
                         "label_dtype": "u16", "feature_dtype": "f32", "provenance": {}}).encode()
    buf = (b"MMDS" + struct.pack("<IQ", 1, len(header)) + header + struct.pack("<2H", 2, 0)
           + struct.pack("<4f", 1.0, -2.0, 0.5, 3.25) + struct.pack("<2f", 7.0, -1.5))
    ds = data.loads(buf)
    assert ds.labels.tolist() == [2, 0]
    assert ds.features["a"].tolist() == [[1.0, -2.0], [0.5, 3.25]]
    assert ds.features["v"].tolist() == [[7.0], [-1.5]]


def _linear_acc(ds, sp, m):
    x = ds.features[m]
    return linear_classifier_accuracy(x[sp.train], ds.labels[sp.train], x[sp.val], ds.labels[sp.val],
                                      ds.num_classes)


def test_zero_snr_is_chance():
    ds = data.generate(SyntheticSpec(4, 4000, (Mod("a", 10, 0.0), Mod("v", 5, 0.0)), seed=0))
    sp = data.split(ds, seed=0)
    for m in ds.names:
        assert abs(_linear_acc(ds, sp, m) - 0.25) < 0.03


def test_snr_gap_example():
    ds = data.generate(SyntheticSpec(4, 4000, (Mod("a", 20, 3.0), Mod("v", 20, 0.5)), seed=0))
    sp = data.split(ds, seed=0)
    assert _linear_acc(ds, sp, "a") - _linear_acc(ds, sp, "v") >= 0.15


def test_snr_monotonicity():
    for seed in range(3):
        accs = []
        for snr in (0.2, 0.5, 1.0):
            ds = data.generate(SyntheticSpec(4, 1200, (Mod("a", 5, snr),), seed=seed))
            accs.append(_linear_acc(ds, data.split(ds, seed=seed), "a"))
        assert all(b >= a - 0.01 for a, b in zip(accs, accs[1:]))


def test_dataset_validation():
    with pytest.raises(ConfigError):
        data.Dataset({"a": np.zeros((3, 2))}, np.array([0, 1]), 2)
    with pytest.raises(ConfigError):
        data.Dataset({"a": np.zeros((2, 2))}, np.array([0, 2]), 2)
    ds = data.generate(_spec(0, n=40, K=4))
    assert ds.summary() == "N=40 K=4 dims: a=4, v=3"


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(4, 300), min_size=2, max_size=6),
       st.sampled_from([(0.6, 0.2, 0.1, 0.1), (0.5, 0.25, 0.125, 0.125), (0.7, 0.1, 0.1, 0.05)]))
def test_stratified_counts_respect_margins(sizes, fractions):
    sizes = np.array(sizes)
    totals = [int(np.floor(sizes.sum() * f + 1e-9)) for f in fractions]
    counts = data._split_counts(sizes, totals)
    assert counts.sum(axis=0).tolist() == totals
    assert np.all(counts.sum(axis=1) <= sizes) and np.all(counts >= 0)
    share = sizes / sizes.sum()
    assert np.all(np.abs(counts - np.outer(share, totals)) <= 1 + 1e-9)
