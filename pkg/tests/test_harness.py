import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from possal.harness import (ConfigError, Dataset, DatasetError, ExperimentConfig, RunRecord, gen_blobs,
                            gen_block, load_csv, load_results, run_active_learning, run_experiment,
                            save_csv, summarize)
from possal.harness.cli import main
from possal.harness.metrics import auc, curve_quartiles, quartiles, write_summary
from possal.pgp import RbfKernel, classify_binary, fit_binary_laplace, predict_prob_mode


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def small_config(**overrides):
    doc = dict(dataset={"kind": "block_corner", "seed": 1}, acquisitions=["random", "u_l"], n_runs=3,
               n_queries=4, train_pool_size=30, test_size=40, master_seed=5)
    doc.update(overrides)
    return ExperimentConfig.from_dict(doc)


def record(acc, dataset="d", acq="a", failed=False):
    return RunRecord(dataset, acq, 0, 0, accuracies=list(acc), failed=failed)


# -- CSV ingestion ---------------------------------------------------------------------

def test_load_csv_standardizes(tmp_path):
    ds = load_csv(write(tmp_path / "toy.csv", "a,b,y\n1,10,x\n2,20,z\n4,60,x\n"))
    assert ds.features.shape == (3, 2)
    np.testing.assert_allclose(ds.features.mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(ds.features.std(axis=0), 1.0, atol=1e-12)
    assert ds.labels.tolist() == [0, 1, 0] and ds.label_names == ("x", "z")


def test_constant_column_becomes_zero(tmp_path):
    ds = load_csv(write(tmp_path / "c.csv", "a,b,y\n1,5,p\n2,5,q\n3,5,p\n4,5,q\n"))
    assert np.all(ds.features[:, 1] == 0.0)


@pytest.mark.parametrize("body, locus", [
    ("a,y\n1,p\n,q\n", ":3:"),
    ("a,y\n1,p\nfoo,q\n", "'a'"),
    ("a,y\n1,p\n2\n", ":3:"),
    ("a,y\n1,p\ninf,q\n", ":3:"),
    ("a,y\n1,p\n2,\n", "missing label"),
])
def test_load_csv_errors_have_locus(tmp_path, body, locus):
    with pytest.raises(DatasetError, match=locus):
        load_csv(write(tmp_path / "bad.csv", body))


def test_single_class_file_rejected(tmp_path):
    with pytest.raises(DatasetError, match="one class"):
        load_csv(write(tmp_path / "one.csv", "a,y\n1,p\n2,p\n3,p\n"))


def test_dataset_invariants():
    with pytest.raises(DatasetError):
        Dataset(np.zeros((3, 1)), np.array([0, 0, 0]), ("a", "b"), "t")
    with pytest.raises(DatasetError, match="at least two points"):
        Dataset(np.zeros((3, 1)), np.array([0, 0, 1]), ("a", "b"), "t").check_experiment_ready()
    with pytest.raises(DatasetError):
        Dataset(np.array([[np.nan], [0], [1], [2]]), np.array([0, 0, 1, 1]), ("a", "b"), "t")


def test_csv_round_trip(tmp_path):
    ds = gen_blobs(seed=2)
    save_csv(ds, tmp_path / "blobs.csv")
    back = load_csv(tmp_path / "blobs.csv")
    assert set(back.label_names) == set(ds.label_names)
    names = np.array(back.label_names)[back.labels]
    assert names.tolist() == np.array(ds.label_names)[ds.labels].tolist()


# -- generators --------------------------------------------------------------------------

def test_block_sizes_and_balance():
    for variant in ("center", "corner"):
        ds = gen_block(variant, seed=0)
        assert len(ds) == 350 and ds.features.shape[1] == 2
    corner = gen_block("corner", seed=0)
    in_block = np.all(corner.features >= 3.0, axis=1)
    assert in_block.sum() == 100 and np.all(corner.labels[in_block] == 1)
    assert np.bincount(corner.labels[~in_block]).tolist() == [125, 125]


def test_center_block_straddles_boundary():
    ds = gen_block("center", seed=4)
    block = np.all(np.abs(ds.features) <= 0.3, axis=1)
    assert block.sum() >= 100
    x = ds.features[block, 0]
    assert x.min() < 0 < x.max()


def _holdout_accuracy(ds, mask=None):
    idx = np.random.default_rng(0).permutation(len(ds))
    tr, te = idx[:150], idx[150:]
    model = fit_binary_laplace(ds.features[tr], 2.0 * ds.labels[tr] - 1, RbfKernel(1.0, 1.0), "logistic")
    pred = predict_prob_mode(classify_binary(model, ds.features[te]), "logistic").argmax(axis=1)
    hit = pred == ds.labels[te]
    keep = np.ones(len(te), bool) if mask is None else mask(ds.features[te])
    return hit[keep].mean()


def test_block_learnability():
    assert _holdout_accuracy(gen_block("corner", seed=3)) >= 0.9
    # the centre block carries coin-flip labels; learnability is judged on the clusters
    assert _holdout_accuracy(gen_block("center", seed=3), lambda X: np.abs(X).max(axis=1) > 0.3) >= 0.9


def test_blobs_shape():
    ds = gen_blobs(seed=0)
    assert ds.n_classes == 3 and np.bincount(ds.labels).tolist() == [60, 60, 60]


def test_generator_parameter_errors():
    with pytest.raises(ValueError):
        gen_block("middle")
    with pytest.raises(ValueError):
        gen_block("center", width=2)


# -- config ----------------------------------------------------------------------------

def test_config_validation():
    with pytest.raises(ConfigError):
        small_config(acquisitions=["bogus"])
    with pytest.raises(ConfigError):
        small_config(n_queries=30)
    with pytest.raises(ConfigError):
        small_config(surprise=1)
    with pytest.raises(ConfigError):
        small_config(train_pool_size=300, test_size=100).load_dataset()


def test_run_seeds_are_stable():
    assert small_config().run_seeds() == small_config().run_seeds()
    assert small_config().run_seeds() != small_config(master_seed=6).run_seeds()


# -- loop ------------------------------------------------------------------------------

def test_zero_queries_single_accuracy():
    cfg = small_config(n_queries=0)
    rec = run_active_learning(cfg, cfg.load_dataset(), "random", 123)
    assert len(rec.accuracies) == 1 and rec.queried == [] and not rec.failed


@pytest.mark.parametrize("acq", ["random", "u_l", "necessity", "entropy"])
def test_run_is_deterministic_and_consistent(acq):
    cfg = small_config()
    ds = cfg.load_dataset()
    a = run_active_learning(cfg, ds, acq, 77)
    b = run_active_learning(cfg, ds, acq, 77)
    assert a.to_json() == b.to_json()
    assert len(a.accuracies) == cfg.n_queries + 1
    assert all(0.0 <= x <= 1.0 for x in a.accuracies)
    assert len(a.labeled) == ds.n_classes + cfg.n_queries
    assert len(set(a.labeled)) == len(a.labeled)
    assert len(set(a.queried)) == len(a.queried)
    assert not set(a.test) & set(a.labeled)
    assert sorted(ds.labels[a.hot_start].tolist()) == list(range(ds.n_classes))


def test_multiclass_run():
    cfg = ExperimentConfig.from_dict(dict(dataset={"kind": "blobs"}, acquisitions=["u_l"], n_runs=1,
                                          n_queries=3, train_pool_size=20, test_size=30))
    rec = run_active_learning(cfg, cfg.load_dataset(), "necessity", 9)
    assert not rec.failed and len(rec.labeled) == 3 + 3


def test_fit_failure_is_recorded(monkeypatch):
    from possal.harness import loop
    from possal.pgp import ConvergenceError

    def boom(*a, **k):
        raise ConvergenceError("no", 1.0, 100)
    monkeypatch.setattr(loop, "fit_binary_laplace", boom)
    cfg = small_config()
    rec = run_active_learning(cfg, cfg.load_dataset(), "random", 1)
    assert rec.failed and "fit failed" in rec.reason


def test_experiment_writes_and_reloads(tmp_path):
    cfg = small_config()
    grouped = run_experiment(cfg, tmp_path)
    loaded = load_results(tmp_path)
    assert set(loaded) == {("block_corner", "random"), ("block_corner", "u_l")}
    for acq, recs in grouped.items():
        assert [r.to_json() for r in loaded[("block_corner", acq)]] == [r.to_json() for r in recs]


def test_adding_an_acquisition_leaves_others_unchanged():
    one = run_experiment(small_config(acquisitions=["random"]))
    two = run_experiment(small_config(acquisitions=["u_l", "random"]))
    assert [r.to_json() for r in one["random"]] == [r.to_json() for r in two["random"]]


def test_parallel_matches_serial():
    serial = run_experiment(small_config())
    parallel = run_experiment(small_config(n_workers=2))
    for acq in serial:
        assert [r.to_json() for r in serial[acq]] == [r.to_json() for r in parallel[acq]]


# -- metrics ---------------------------------------------------------------------------

def test_quartile_example():
    assert quartiles([0.6, 0.8, 1.0]) == pytest.approx((0.7, 0.8, 0.9))
    row = summarize({("d", "a"): [record([0.5, x]) for x in (0.6, 0.8, 1.0)]}).row("d", "a")
    assert (row.final_median, row.final_q1, row.final_q3) == pytest.approx((0.8, 0.7, 0.9))


def test_constant_auc():
    assert auc([0.73] * 11) == pytest.approx(0.73)


def test_hand_computed_ranks():
    recs = {}
    for ds in ("d1", "d2"):
        recs[(ds, "good")] = [record([0.9]), record([0.9])]
        recs[(ds, "bad")] = [record([0.8]), record([0.8])]
    table = summarize(recs)
    assert table.average_ranks["final"] == {"bad": 2.0, "good": 1.0}
    assert table.row("d1", "good").final_rank == 1.0


def test_ranks_on_synthetic_summary():
    # final medians: d1 a=.9 b=.8 c=.8 ; d2 a=.7 b=.9 c=.6
    finals = {("d1", "a"): .9, ("d1", "b"): .8, ("d1", "c"): .8, ("d2", "a"): .7, ("d2", "b"): .9, ("d2", "c"): .6}
    table = summarize({k: [record([v]), record([v])] for k, v in finals.items()})
    assert table.average_ranks["final"] == pytest.approx({"a": 1.5, "b": 1.75, "c": 2.75})


def test_failed_runs_excluded():
    recs = {("d", "a"): [record([0.5]), record([0.7]), record([0.0], failed=True)]}
    row = summarize(recs).row("d", "a")
    assert row.n_runs == 2 and row.n_failed == 1 and row.final_median == pytest.approx(0.6)
    with pytest.raises(ValueError):
        summarize({("d", "a"): [record([0.5]), record([0.1], failed=True)]})


def test_empty_records_rejected():
    with pytest.raises(ValueError):
        summarize({})


@given(st.lists(st.lists(st.floats(0, 1), min_size=3, max_size=3), min_size=2, max_size=8),
       st.integers(2, 5), st.randoms())
@settings(max_examples=60, deadline=None)
def test_summary_properties(curves, n_methods, rnd):
    recs = {("d", f"m{j}"): [record(np.roll(c, j)) for c in curves] for j in range(n_methods)}
    table = summarize(recs)
    for r in table.rows:
        assert r.final_q1 <= r.final_median <= r.final_q3
    for metric in ("final", "auc"):
        assert np.mean(list(table.average_ranks[metric].values())) == pytest.approx((n_methods + 1) / 2)
    shuffled = {k: rnd.sample(v, len(v)) for k, v in recs.items()}
    assert summarize(shuffled) == table


def test_curve_quartiles_and_summary_files(tmp_path):
    recs = [record([0.5, 0.6]), record([0.7, 0.8]), record([0.6, 1.0])]
    np.testing.assert_allclose(curve_quartiles(recs), [[0.6, 0.55, 0.65], [0.8, 0.7, 0.9]])
    s, r = write_summary(summarize({("d", "a"): recs, ("d", "b"): recs}), tmp_path)
    assert s.read_text().splitlines()[0].startswith("dataset,acquisition")
    assert "final,a,1.5000" in r.read_text()


# -- CLI -------------------------------------------------------------------------------

@pytest.fixture
def config_file(tmp_path):
    doc = small_config().to_dict()
    path = tmp_path / "c.json"
    path.write_text(json.dumps(doc))
    return path


def test_cli_run_is_byte_identical(tmp_path, config_file):
    assert main(["run", "--config", str(config_file), "--seed", "7", "--out", str(tmp_path / "r1")]) == 0
    assert main(["run", "--config", str(config_file), "--seed", "7", "--out", str(tmp_path / "r2")]) == 0
    files = sorted(p.name for p in (tmp_path / "r1").iterdir())
    assert files and files == sorted(p.name for p in (tmp_path / "r2").iterdir())
    for name in files:
        assert (tmp_path / "r1" / name).read_bytes() == (tmp_path / "r2" / name).read_bytes()
    meta = json.loads((tmp_path / "r1" / "block_corner__config.json").read_text())
    assert meta["master_seed"] == 7


def test_cli_missing_config(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "absent.json")]) == 2
    err = capsys.readouterr().err
    assert "usage:" in err and "not found" in err


def test_cli_bad_config_exits_nonzero(tmp_path, capsys):
    path = write(tmp_path / "bad.json", '{"dataset": {"kind": "blobs"}}')
    assert main(["run", "--config", str(path), "--out", str(tmp_path)]) == 1
    assert "error" in capsys.readouterr().err


def test_cli_summarize_and_plot(tmp_path, config_file, capsys):
    out = tmp_path / "res"
    main(["run", "--config", str(config_file), "--out", str(out)])
    assert main(["summarize", str(out)]) == 0
    assert "average rank (final)" in capsys.readouterr().out
    assert (out / "summary.csv").exists() and (out / "ranks.csv").exists()
    plot = tmp_path / "plot.csv"
    assert main(["export-plot", str(out), "--out", str(plot)]) == 0
    lines = plot.read_text().splitlines()
    assert lines[0] == "step,acquisition,median,q1,q3"
    assert len(lines) == 1 + 2 * (4 + 1)
    assert main(["export-plot", str(out), "--dataset", "nope", "--out", str(plot)]) == 1


def test_cli_summarize_empty_dir(tmp_path):
    assert main(["summarize", str(tmp_path)]) == 1


def test_cli_gen_data(tmp_path):
    for kind in ("block_center", "block_corner", "blobs"):
        path = tmp_path / f"{kind}.csv"
        assert main(["gen-data", kind, "--out", str(path), "--seed", "3"]) == 0
        assert len(load_csv(path)) == (180 if kind == "blobs" else 350)
