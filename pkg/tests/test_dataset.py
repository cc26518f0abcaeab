import io

import numpy as np
import pytest

from stvanox.errors import ConfigError, DataError, EmptyDatasetError, SchemaError
from stvanox.obd.dataset import (
    DEFAULT_SCHEMA,
    PHYSICS_ATTRIBUTES,
    TARGET,
    ObdDataset,
    ObdRun,
    SplitSpec,
    parse_csv,
    resample_uniform,
    split_train_test,
    write_csv,
)

HEADER = list(DEFAULT_SCHEMA) + ["EngTq"]


def _row(run_id, route_id, t, speed=1200.0, nox=42.0, torque="310.5"):
    values = [run_id, route_id, t, 600.0, 20.0, 1.2e8, 1.5e5, 310.0, speed, nox]
    return ",".join(str(v) for v in values) + f",{torque}"


def _csv(rows, header=HEADER):
    return "\n".join([",".join(header), *rows]) + "\n"


def test_parse_csv():
    text = _csv(
        [
            _row("r1", "A", 1),
            _row("r1", "A", 0),
            _row("r2", "B", 0, torque=""),
            _row("r2", "B", 1),
        ]
    )
    dataset, report = parse_csv(text.encode())
    assert dataset.run_ids == ("r1", "r2")
    assert dataset.extras == ("EngTq",)
    r1 = dataset.run("r1")
    assert r1.route_id == "A"
    np.testing.assert_array_equal(r1.t, [0.0, 1.0])
    assert r1.column("engine_speed").tolist() == [1200.0, 1200.0]
    assert r1.column(TARGET).tolist() == [42.0, 42.0]
    assert np.isnan(dataset.run("r2").column("EngTq")[0])
    assert report.rows_read == 4 and report.rows_dropped == 0
    assert report.to_dict()["per_run_counts"] == {"r1": 2, "r2": 2}


def test_parse_csv_from_path_and_stream(tmp_path):
    path = tmp_path / "obd.csv"
    path.write_text(_csv([_row("r1", "A", 0), _row("r1", "A", 1)]), encoding="utf-8")
    from_path, _ = parse_csv(path)
    with open(path, "rb") as stream:
        from_stream, _ = parse_csv(stream)
    assert from_path.equals(from_stream)
    assert from_path.n_samples == 2


def test_parse_csv_drops_invalid_rows():
    text = _csv(
        [
            _row("r1", "A", 0),
            _row("r1", "A", 1, speed=-5.0),
            _row("r1", "A", 2, nox=""),
            _row("r1", "A", 3, nox="n/a"),
            _row("", "A", 4),
            _row("r1", "A", 5),
        ]
    )
    dataset, report = parse_csv(text.encode())
    assert report.rows_read == 6
    assert report.rows_dropped == 4
    assert dataset.run("r1").t.tolist() == [0.0, 5.0]


def test_parse_csv_numeric_cells():
    torques = ["n/a", " 7.5 ", "1e3", "-0.5", "", "12,5"]
    rows = [_row("r1", "A", i, torque=f'"{v}"') for i, v in enumerate(torques)]
    dataset, report = parse_csv(_csv(rows).encode())
    assert report.rows_dropped == 0
    torque = dataset.run("r1").column("EngTq")
    assert torque.dtype == np.float64
    np.testing.assert_array_equal(torque, [np.nan, 7.5, 1000.0, -0.5, np.nan, np.nan])


def test_parse_csv_drops_duplicated_timestamps(caplog):
    text = _csv([_row("r1", "A", 0), _row("r1", "A", 1, nox=50.0), _row("r1", "A", 1, nox=60.0)])
    with caplog.at_level("WARNING", logger="stvanox.obd.dataset"):
        dataset, report = parse_csv(text.encode())
    assert dataset.run("r1").column(TARGET).tolist() == [42.0, 50.0]
    assert report.rows_dropped == 1
    assert "duplicated timestamps" in caplog.text


def test_parse_csv_missing_column():
    header = [c for c in HEADER if c != "nox_ppm"]
    text = "\n".join([",".join(header), "r1,A,0,600,20,1.2e8,1.5e5,310,1200,1"]) + "\n"
    with pytest.raises(SchemaError) as info:
        parse_csv(text.encode())
    assert info.value.name == "nox_ppm"


@pytest.mark.parametrize("content", [b"", b"\n\n", (",".join(HEADER) + "\n").encode()])
def test_parse_csv_empty(content):
    with pytest.raises(EmptyDatasetError):
        parse_csv(content)


def test_parse_csv_all_rows_invalid():
    with pytest.raises(EmptyDatasetError):
        parse_csv(_csv([_row("r1", "A", 0, speed=-1.0)]).encode())


def test_parse_csv_custom_schema():
    schema = dict(DEFAULT_SCHEMA)
    schema["rpm"] = schema.pop("engine_rpm")
    header = [("rpm" if c == "engine_rpm" else c) for c in HEADER]
    dataset, _ = parse_csv(_csv([_row("r1", "A", 0)], header).encode(), schema=schema)
    assert dataset.run("r1").column("engine_speed").tolist() == [1200.0]


def test_parse_csv_guesses_encoding(caplog):
    text = _csv([_row("r1", "A", 0), _row("r1", "A", 1)])
    with caplog.at_level("WARNING", logger="stvanox.util"):
        dataset, _ = parse_csv(text.encode("utf-16"))
    assert dataset.n_samples == 2
    assert "decoding as" in caplog.text


def test_parse_csv_strips_bom():
    text = _csv([_row("r1", "A", 0)])
    dataset, _ = parse_csv(text.encode("utf-8-sig"))
    assert dataset.run_ids == ("r1",)


def test_write_then_parse_gives_back_the_dataset(make_dataset):
    dataset = make_dataset(n_runs=3, n=20)
    sink = io.StringIO()
    write_csv(dataset, sink)
    parsed, report = parse_csv(sink.getvalue().encode())
    assert parsed.equals(dataset)
    assert report.rows_dropped == 0


def test_run_validation():
    t = np.arange(3.0)
    columns = {name: np.ones(3) for name in (*PHYSICS_ATTRIBUTES, TARGET)}
    run = ObdRun("r", "A", t, columns)
    assert run.extras == ()
    with pytest.raises(ValueError):
        run.t[0] = 5.0
    missing = dict(columns)
    del missing["fuel_rate"]
    with pytest.raises(SchemaError):
        ObdRun("r", "A", t, missing)
    with pytest.raises(DataError):
        ObdRun("r", "A", t, {**columns, "EngTq": np.ones(2)})
    with pytest.raises(SchemaError):
        run.column("EngTq")


def test_record(make_run):
    run = make_run(n=3, extras=("EngTq",))
    record = run.record(1)
    assert record.run_id == "run-1"
    assert record.engine_speed == run.column("engine_speed")[1]
    assert set(record.extras) == {"EngTq"}
    assert record.is_valid()
    assert len(list(run.records())) == 3


def test_dataset_accessors(make_run):
    runs = [make_run("a", "A", 5, seed=1, extras=("EngTq",)), make_run("b", "B", 4, seed=2)]
    dataset = ObdDataset(runs)
    assert dataset.extras == ("EngTq",)
    assert dataset.n_samples == 9
    assert dataset.routes() == {"A": ["a"], "B": ["b"]}
    torque = dataset.series("EngTq")
    assert np.isnan(torque["b"]).all() and torque["b"].size == 4
    with pytest.raises(SchemaError):
        dataset.series("EGRkgph")
    assert dataset.subset(["b"]).run_ids == ("b",)
    with pytest.raises(DataError):
        dataset.subset(["c"])
    with pytest.raises(DataError):
        ObdDataset([runs[0], runs[0]])
    with pytest.raises(ConfigError):
        ObdDataset(runs, sample_period=0)


def test_resample_holds_values(make_run):
    run = make_run(n=5).take(np.arange(5), t=np.array([0.0, 1.0, 2.0, 4.0, 5.0]))
    resampled = resample_uniform(ObdDataset([run]), 1.0)
    out = resampled.run("run-1")
    np.testing.assert_array_equal(out.t, np.arange(6.0))
    speed = run.column("engine_speed")
    np.testing.assert_array_equal(out.column("engine_speed"), speed[[0, 1, 2, 2, 3, 4]])


def test_resample_splits_at_gaps(make_run):
    run = make_run(n=5).take(np.arange(5), t=np.array([0.0, 1.0, 2.0, 20.0, 21.0]))
    resampled = resample_uniform(ObdDataset([run]), 1.0)
    assert resampled.run_ids == ("run-1-1", "run-1-2")
    assert len(resampled.run("run-1-1")) == 3
    np.testing.assert_array_equal(resampled.run("run-1-2").t, [20.0, 21.0])
    with pytest.raises(ConfigError):
        resample_uniform(ObdDataset([run]), 0.0)


def test_resample_names_avoid_existing_runs(make_run, caplog):
    gapped = make_run("run-1", n=4).take(np.arange(4), t=np.array([0.0, 1.0, 20.0, 21.0]))
    other = make_run("run-1-2", n=3, seed=1)
    with caplog.at_level("WARNING", logger="stvanox.obd.dataset"):
        resampled = resample_uniform(ObdDataset([gapped, other]), 1.0)
    assert resampled.run_ids == ("run-1-split1-1", "run-1-split1-2", "run-1-2")
    assert resampled.run("run-1-2").equals(other)
    assert "already exist" in caplog.text


@pytest.mark.parametrize("seed", range(5))
def test_resample_gives_a_uniform_grid(make_run, seed):
    rng = np.random.default_rng(seed)
    t = np.cumsum(rng.uniform(0.1, 2.4, 60))
    run = make_run(n=60, seed=seed).take(np.arange(60), t=t)
    for period in (0.5, 1.0):
        out = resample_uniform(ObdDataset([run]), period).run("run-1")
        np.testing.assert_allclose(np.diff(out.t), period)
        assert out.t[0] == t[0]
        assert out.t[-1] <= t[-1] + 1e-9 < out.t[-1] + period
        source = np.searchsorted(t, out.t + 1e-9, side="right") - 1
        np.testing.assert_array_equal(out.column("fuel_rate"), run.column("fuel_rate")[source])


def test_split_is_route_stratified(make_dataset):
    dataset = make_dataset(n_runs=9, n=5, routes=3)
    split = split_train_test(dataset, seed=3)
    assert split.train_run_ids | split.test_run_ids == set(dataset.run_ids)
    assert not split.train_run_ids & split.test_run_ids
    for run_ids in dataset.routes().values():
        assert set(run_ids) & split.train_run_ids
        assert set(run_ids) & split.test_run_ids
    assert split_train_test(dataset, seed=3) == split
    assert abs(len(split.train_run_ids) - len(split.test_run_ids)) <= 1


def test_split_single_run_route(caplog, make_run):
    runs = [make_run("a", "A"), make_run("b", "B", seed=1), make_run("c", "B", seed=2)]
    with caplog.at_level("WARNING", logger="stvanox.obd.dataset"):
        split = split_train_test(ObdDataset(runs), seed=0)
    assert "a" in split.train_run_ids
    assert len(split.test_run_ids) == 1
    assert "single run" in caplog.text
    with pytest.raises(DataError):
        split_train_test(ObdDataset(runs[:1]), seed=0)


def test_split_spec():
    with pytest.raises(ConfigError):
        SplitSpec(frozenset({"a"}), frozenset({"a", "b"}))
    assert SplitSpec(frozenset({"b", "a"}), frozenset()).to_dict() == {
        "train_run_ids": ["a", "b"],
        "test_run_ids": [],
    }
