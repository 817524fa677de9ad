import csv

import numpy as np
import pytest

from deploykit import blobstore
from deploykit.bench import cli
from deploykit.bench.models import MODELS, SPECS, NativeModel, extract_weights, gen_models, load_direct
from deploykit.bench.report import (
    fraction_check,
    parity_check,
    plateau_check,
    read_rows,
    report,
    run_checks,
    scaling_check,
)
from deploykit.bench.runner import FIELDS, BenchConfig, BenchRow, CsvSink, run_bench, run_interleaved
from deploykit.errors import ConfigError, FormatError
from deploykit.package import Archive


@pytest.fixture(scope="module")
def models_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("models")
    gen_models(out, seed=0)
    return out


def numpy_forward(weights, x):
    out = x.astype(np.float64)
    for w in weights:
        out = np.maximum(out @ w.astype(np.float64), 0.0)
    return out


def test_gen_is_deterministic(models_dir, tmp_path):
    again = gen_models(tmp_path, seed=0)
    for model, path in again.items():
        assert path.read_bytes() == (models_dir / f"{model}.zip").read_bytes()
    other = gen_models(tmp_path / "s1", seed=1, models=["small"])
    assert other["small"].read_bytes() != again["small"].read_bytes()


def test_archives_mock_false_dependencies(models_dir):
    arc = Archive.open(models_dir / "large.zip")
    assert arc.mocked_modules == {"numpy", "scipy.signal"}
    assert arc.source_modules() == ["layers", "net"]


@pytest.mark.parametrize("model", ["large", "small"])
def test_model_shapes_and_native_agreement(models_dir, model):
    spec = SPECS[model]
    imp, net, eg = load_direct(models_dir / f"{model}.zip")
    weights = extract_weights(net)
    assert len(weights) == spec.depth
    assert all(w.shape == (spec.width, spec.width) for w in weights)
    assert eg.shape == (spec.batch, spec.width)
    scripted = imp.interp.call_value(net, [eg])
    native = NativeModel(weights)(eg)
    assert np.array_equal(scripted.numpy(), native.numpy())
    out = scripted.numpy()
    assert np.isfinite(out).all() and np.abs(out).max() > 0
    # float64 oracle, loose tolerance for f32 rounding
    ref = numpy_forward([w.numpy() for w in weights], eg.numpy())
    assert np.allclose(out, ref, rtol=1e-3, atol=1e-3 * np.abs(ref).max())


def test_identity_model(models_dir):
    imp, net, eg = load_direct(models_dir / "identity.zip")
    assert imp.interp.call_value(net, [eg]) is eg
    assert extract_weights(net) == []


def test_bench_config_validation():
    for bad in (
        dict(config="nope", model="small"),
        dict(config="multi", model="nope"),
        dict(config="multi", model="small", threads=[0]),
        dict(config="multi", model="small", threads=[]),
        dict(config="multi", model="small", duration=0),
    ):
        with pytest.raises(ConfigError):
            BenchConfig(**bad)
    assert BenchConfig("multi", "small", threads=[1, 4]).n_interpreters == 4
    assert BenchConfig("single", "small", threads=[1, 4]).n_interpreters == 1


@pytest.mark.parametrize("config", ["multi", "single", "native"])
def test_short_run_writes_rows(models_dir, tmp_path, config):
    out = tmp_path / "r.csv"
    cfg = BenchConfig(config, "identity", [1, 2], duration=0.2, warmup=0.05, out=str(out), models_dir=str(models_dir))
    rows = run_bench(cfg)
    assert [r.threads for r in rows] == [1, 2]
    assert all(r.requests > 0 and r.throughput > 0 and 0 <= r.interp_fraction <= 1 for r in rows)
    raw = out.read_bytes()
    assert b"\r" not in raw and raw.endswith(b"\n")
    assert raw.splitlines()[0].decode() == ",".join(FIELDS)
    assert read_rows(out) == [BenchRow(*r.as_csv()[:2], *_parsed(r)) for r in rows]


def _parsed(row):
    rec = row.as_csv()
    return int(rec[2]), int(rec[3]), float(rec[4]), float(rec[5]), float(rec[6])


def test_run_generates_missing_models(tmp_path):
    out = tmp_path / "sub" / "r.csv"
    out.parent.mkdir()
    run_bench(BenchConfig("native", "identity", [1], duration=0.1, warmup=0.0, out=str(out)))
    assert (tmp_path / "sub" / "models" / "identity.zip").exists()


def test_csv_appends_and_checks_header(tmp_path):
    path = tmp_path / "r.csv"
    row = BenchRow("multi", "small", 1, 10, 1.0, 10.0, 0.5)
    for _ in range(2):
        sink = CsvSink(path)
        sink.write(row)
        sink.close()
    assert len(read_rows(path)) == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n")
    with pytest.raises(FormatError):
        CsvSink(bad)


@pytest.mark.parametrize(
    "text",
    [
        "config,model\n",
        ",".join(FIELDS) + "\nmulti,small,1\n",
        ",".join(FIELDS) + "\nmulti,small,one,1,1.0,1.0,0.5\n",
    ],
)
def test_read_rows_rejects_malformed(tmp_path, text):
    path = tmp_path / "r.csv"
    path.write_text(text)
    with pytest.raises(FormatError):
        read_rows(path)


def test_empty_csv_reports_no_rows(tmp_path):
    path = tmp_path / "r.csv"
    path.write_text("")
    assert read_rows(path) == []
    assert report(path) == "(no rows)"
    assert run_checks([]) == []


def rows_from(spec):
    return [BenchRow(c, m, t, int(v), 1.0, float(v), f) for c, m, t, v, f in spec]


def test_checks_on_fixture_rows():
    rows = rows_from(
        [
            ("single", "small", 1, 100, 0.5),
            ("single", "small", 8, 120, 0.5),
            ("multi", "small", 1, 100, 0.5),
            ("multi", "small", 8, 350, 0.5),
            ("multi", "large", 4, 90, 0.05),
            ("single", "large", 4, 100, 0.05),
            ("native", "large", 4, 110, 0.0),
        ]
    )
    assert plateau_check(rows).passed
    assert scaling_check(rows, cores=8).passed
    assert parity_check(rows).passed
    assert fraction_check(rows).passed
    failing = rows_from(
        [
            ("single", "small", 1, 100, 0.5),
            ("single", "small", 8, 200, 0.5),
            ("multi", "small", 1, 100, 0.5),
            ("multi", "small", 8, 200, 0.5),
            ("multi", "large", 4, 50, 0.3),
            ("single", "large", 4, 100, 0.3),
            ("native", "large", 4, 100, 0.0),
        ]
    )
    assert [c.passed for c in run_checks(failing, cores=8)] == [False, False, False, False]


def test_scaling_check_adapts_to_core_count():
    rows = rows_from([("multi", "small", 1, 100, 0.5), ("multi", "small", 2, 110, 0.5), ("multi", "small", 4, 190, 0.5)])
    assert scaling_check(rows, cores=2).passed  # 1.1 >= 1.0
    assert not scaling_check(rows, cores=4).passed  # 1.9 < 2.0
    assert scaling_check(rows, cores=8) is None
    assert scaling_check(rows, cores=1).passed


def test_missing_rows_skip_checks():
    rows = rows_from([("multi", "small", 1, 100, 0.5)])
    assert plateau_check(rows) is None and parity_check(rows) is None and fraction_check(rows) is None


def test_report_draws_figures_next_to_csv(tmp_path):
    path = tmp_path / "r.csv"
    sink = CsvSink(path)
    for row in rows_from([("multi", "small", 1, 10, 0.5), ("multi", "small", 2, 18, 0.5), ("native", "large", 1, 5, 0.0)]):
        sink.write(row)
    sink.close()
    text = report(path)
    assert "model: small" in text and "model: large" in text
    for model in ("small", "large"):
        png = tmp_path / f"r_{model}.png"
        assert png.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    (tmp_path / "r_small.png").unlink()
    report(path, figures=False)
    assert not (tmp_path / "r_small.png").exists()


def test_cli_round_trip(tmp_path, capsys):
    models = tmp_path / "models"
    assert cli.main(["gen", "--out", str(models), "--seed", "0"]) == 0
    assert sorted(p.name for p in models.iterdir()) == sorted(f"{m}.zip" for m in MODELS)
    out = tmp_path / "r.csv"
    args = ["run", "--config", "single", "--model", "identity", "--threads", "1,2", "--duration", "0.1", "--warmup", "0"]
    assert cli.main(args + ["--models", str(models), "--out", str(out)]) == 0
    with open(out, newline="") as f:
        assert len(list(csv.reader(f))) == 3
    assert cli.main(["report", str(out)]) == 0
    assert (tmp_path / "r_identity.png").exists()
    capsys.readouterr()


def test_cli_errors(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("x,y\n1,2\n")
    assert cli.main(["report", str(bad)]) == 1
    assert cli.main(["report", str(tmp_path / "missing.csv")]) == 1
    with pytest.raises(SystemExit) as info:
        cli.main(["run", "--config", "multi", "--model", "small", "--threads", "0", "--out", "x.csv"])
    assert info.value.code == 2
    assert "error" in capsys.readouterr().err


def test_cli_check_exit_code(tmp_path, capsys):
    path = tmp_path / "r.csv"
    sink = CsvSink(path)
    for row in rows_from([("multi", "large", 1, 10, 0.9)]):
        sink.write(row)
    sink.close()
    assert cli.main(["report", str(path), "--no-figures", "--check"]) == 2
    assert "FAIL large-model interpreter fraction" in capsys.readouterr().out
    empty = tmp_path / "e.csv"
    empty.write_text("")
    assert cli.main(["report", str(empty), "--check"]) == 0


def test_native_kernels_are_shared(models_dir):
    _, net, _ = load_direct(models_dir / "small.zip")
    native = NativeModel.from_archive(models_dir / "small.zip")
    assert [w.key for w in native.weights] != [] and len(native.weights) == SPECS["small"].depth
    assert all(isinstance(w, blobstore.Tensor) for w in native.weights)


def test_interp_fraction_ignores_oversubscription(models_dir):
    # more requester threads than cores must not move the fraction: it counts CPU work, not waiting
    rows = run_bench(BenchConfig("multi", "small", [1, 8], duration=0.6, warmup=0.2, models_dir=str(models_dir)))
    one, eight = (r.interp_fraction for r in rows)
    assert 0.2 < one < 0.8
    assert abs(one - eight) < 0.1


def test_interleaved_rounds_aggregate(models_dir):
    cfgs = [BenchConfig(c, "identity", [1, 2], duration=0.3, warmup=0.0, models_dir=str(models_dir)) for c in ("single", "native")]
    rows = run_interleaved(cfgs, rounds=3)
    assert sorted((r.config, r.threads) for r in rows) == [("native", 1), ("native", 2), ("single", 1), ("single", 2)]
    for r in rows:
        assert r.seconds == pytest.approx(0.3)
        assert r.throughput == pytest.approx(r.requests / r.seconds)
    with pytest.raises(ConfigError):
        run_interleaved(cfgs, rounds=0)


def test_cli_compare(models_dir, tmp_path, capsys):
    out = tmp_path / "c.csv"
    args = ["compare", "--configs", "multi,native", "--model", "identity", "--threads", "1", "--duration", "0.2"]
    assert cli.main(args + ["--rounds", "2", "--warmup", "0", "--models", str(models_dir), "--out", str(out)]) == 0
    assert [r.config for r in read_rows(out)] == ["multi", "native"]
    with pytest.raises(SystemExit):
        cli.main(["compare", "--configs", "multi,bogus", "--model", "identity", "--out", str(out)])
    capsys.readouterr()
