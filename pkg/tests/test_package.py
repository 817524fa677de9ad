import gc
import os
import zipfile

import numpy as np
import pytest

from deploykit import blobstore, serde
from deploykit.errors import DependencyError, FormatError, MockUsedError, PatternError
from deploykit.package import (
    EXTERN,
    MOCK,
    Archive,
    DictProvider,
    HermeticImporter,
    ModulePattern,
    PackageExporter,
    SourceImporter,
)
from deploykit.script import Interpreter

from .conftest import export, src
from .pattern_table import INVALID_PATTERNS, MATCH_TABLE, check_all
from .trees import struct_equal

LAYERS = src("""
    import nt

    class Linear:
        def __init__(self, w):
            self.weight = w

        def __call__(self, x):
            return nt.relu(nt.matmul(x, self.weight))
""")

NET = src("""
    from layers import Linear
    import numpy as np
    from scipy.signal import medfilt

    class Net:
        def __init__(self, seed):
            self.a = Linear(nt.rand([4, 4], seed))
            self.b = Linear(nt.rand([4, 3], seed + 1))

        def __call__(self, x):
            return self.b(self.a(x))
""")

STUBS = {"numpy": "x = 1\n", "scipy.signal": "def medfilt(x, k):\n    return x\n", "scipy": ""}
MODEL_SOURCES = {"layers": LAYERS, "net": NET, **STUBS}


def build_net(importer, seed=3):
    net = importer.interp.call_value(importer.import_module("net").get_attr("Net"), [seed])
    return {"model/model.pkl": net, "model/eg.pkl": blobstore.rand([2, 4], 99)}


def names(path):
    with zipfile.ZipFile(path) as zf:
        return sorted(zf.namelist())


# -- patterns --

@pytest.mark.parametrize("pattern, module, expected", MATCH_TABLE)
def test_pattern_matching(pattern, module, expected):
    assert ModulePattern(pattern).matches(module) is expected


@pytest.mark.parametrize("pattern", INVALID_PATTERNS)
def test_invalid_patterns(pattern, tmp_path):
    with pytest.raises(PatternError):
        ModulePattern(pattern)
    exp = PackageExporter(tmp_path / "x.zip")
    with pytest.raises(PatternError):
        exp.mock([pattern])


def test_classification_table():
    assert check_all() == []


# -- exporter --

def test_new_exporter_externs_only_nt(tmp_path):
    exp = PackageExporter(tmp_path / "p.zip")
    assert exp.extern_modules == ["nt"]
    assert exp.classify("nt") == EXTERN and exp.classify("nt.linalg") == EXTERN


def test_unwritable_destination(tmp_path):
    with pytest.raises(OSError):
        PackageExporter(tmp_path / "missing" / "p.zip")


def test_empty_archive(tmp_path):
    path = tmp_path / "p.zip"
    PackageExporter(path).finalize()
    arc = Archive.open(path)
    assert names(path) == ["extern_modules", "mocked_modules"]
    assert arc.entries["extern_modules"] == b"nt\n"
    assert arc.entries["mocked_modules"] == b""


def test_second_export_overwrites_atomically(tmp_path):
    path = tmp_path / "p.zip"
    export(path, {}, saves={"a/one.pkl": 1})
    export(path, {}, saves={"b/two.pkl": 2})
    assert "b/two.pkl" in names(path) and "a/one.pkl" not in names(path)
    assert os.listdir(tmp_path) == ["p.zip"]


def test_mocked_module_gets_no_source(tmp_path):
    path = tmp_path / "p.zip"
    export(path, MODEL_SOURCES, mock=["numpy", "scipy.**"], build=build_net)
    arc = Archive.open(path)
    assert arc.source_modules() == ["layers", "net"]
    assert arc.mocked_modules == {"numpy", "scipy.signal"}


def test_tacotron_shaped_layout(tmp_path):
    path = tmp_path / "p.zip"
    export(path, MODEL_SOURCES, mock=["numpy", "scipy.**"], build=build_net)
    assert names(path) == [
        "code/layers.ms",
        "code/net.ms",
        "data/0.nt",
        "data/1.nt",
        "data/2.nt",
        "extern_modules",
        "mocked_modules",
        "model/eg.pkl",
        "model/model.pkl",
    ]
    with zipfile.ZipFile(path) as zf:
        for info in zf.infolist():
            assert info.date_time == (1980, 1, 1, 0, 0, 0)
            assert info.compress_type == zipfile.ZIP_STORED


def test_save_plain_int(tmp_path):
    path = tmp_path / "p.zip"
    export(path, {}, saves={"res/one.pkl": 1})
    assert names(path) == ["extern_modules", "mocked_modules", "res/one.pkl"]
    assert Archive.open(path).entries["res/one.pkl"] == serde.pickle(1).data


def test_missing_dependency_reports_chain(tmp_path):
    sources = {"net": "import dataload\nclass Net:\n    pass\n"}

    def build(importer):
        return {}

    interp = Interpreter()
    interp.register_module("dataload", "x = 1\n")  # present while authoring only
    importer = SourceImporter(interp, DictProvider(sources))
    net = interp.call_value(importer.import_module("net").get_attr("Net"))
    exp = PackageExporter(tmp_path / "p.zip", importers=[importer])
    with pytest.raises(DependencyError) as info:
        exp.save_pickle("model", "model.pkl", net)
    assert info.value.failures == [["dataload", "import in net", "GLOBAL in model/model.pkl"]]
    assert "dataload <- import in net <- GLOBAL in model/model.pkl" in str(info.value)


def test_finalize_aggregates_failures(tmp_path):
    exp = PackageExporter(tmp_path / "p.zip", provider=DictProvider({"a": "import gone1\nimport gone2\n"}))
    exp._roots.append(("a", "explicitly saved"))
    with pytest.raises(DependencyError) as info:
        exp.finalize()
    assert {chain[0] for chain in info.value.failures} == {"gone1", "gone2"}
    assert not (tmp_path / "p.zip").exists()


def test_save_module_and_mocks_satisfy_imports(tmp_path):
    path = tmp_path / "p.zip"
    sources = {"plugins.op": "import numpy\nimport plugins.util\n", "plugins.util": "y = 2\n", "numpy": ""}
    export(path, sources, mock=["numpy"], modules=["plugins.op"])
    assert Archive.open(path).source_modules() == ["plugins.op", "plugins.util"]
    assert "numpy" in Archive.open(path).mocked_modules


def test_dynamic_module_needs_save_module(tmp_path):
    # loaded by name at run time; static scanning cannot see it
    sources = {
        "main": "class Runner:\n    def run(self, imp):\n        return imp.import_module('plugin').VALUE\n",
        "plugin": "VALUE = 41 + 1\n",
    }

    def build(importer):
        runner = importer.interp.call_value(importer.import_module("main").get_attr("Runner"))
        return {"r/runner.pkl": runner}

    without = tmp_path / "without.zip"
    export(without, sources, build=build)
    assert Archive.open(without).source_modules() == ["main"]
    with_plugin = tmp_path / "with.zip"
    export(with_plugin, sources, build=build, modules=["plugin"])
    imp = HermeticImporter(Interpreter(), with_plugin)
    runner = imp.load_pickle("r", "runner.pkl")
    assert imp.interp.call_value(imp.interp.get_attr(runner, "run"), [imp]) == 42
    imp2 = HermeticImporter(Interpreter(), without)
    runner2 = imp2.load_pickle("r", "runner.pkl")
    with pytest.raises(ImportError, match="plugin"):
        imp2.interp.call_value(imp2.interp.get_attr(runner2, "run"), [imp2])


def test_deterministic_archives(tmp_path):
    a, b = tmp_path / "a.zip", tmp_path / "b.zip"
    export(a, MODEL_SOURCES, mock=["numpy", "scipy.**"], build=build_net)
    export(b, MODEL_SOURCES, mock=["numpy", "scipy.**"], build=build_net)
    assert a.read_bytes() == b.read_bytes()


def validate_archive(path):
    """Independent check: every pickle reference and every import resolves inside the zip."""
    from deploykit.script import parse_module

    with zipfile.ZipFile(path) as zf:
        entries = {n: zf.read(n) for n in zf.namelist()}
    extern = set(entries["extern_modules"].decode().split())
    mocked = set(entries["mocked_modules"].decode().split())

    def resolvable(module):
        parts = module.split(".")
        prefixes = {".".join(parts[:i]) for i in range(1, len(parts) + 1)}
        return f"code/{module.replace('.', '/')}.ms" in entries or module in extern or prefixes & mocked

    problems = []
    for name, raw in entries.items():
        if name.endswith(".pkl"):
            globals_, blobs = serde.scan(raw)
            problems += [f"{name}: {m}" for m, _ in globals_ if not resolvable(m)]
            problems += [f"{name}: data/{k}.nt" for k in blobs if f"data/{k}.nt" not in entries]
        elif name.startswith("code/"):
            module = name[5:-3].replace("/", ".")
            for decl in parse_module(module, raw.decode()).imports:
                if not resolvable(decl.module):
                    problems.append(f"{name}: import {decl.module}")
        elif name.startswith("data/"):
            blobstore.decode_ntb1(raw)
    return problems


def test_archive_validates(tmp_path):
    path = tmp_path / "p.zip"
    export(path, MODEL_SOURCES, mock=["numpy", "scipy.**"], build=build_net)
    assert validate_archive(path) == []


def test_dependency_report(tmp_path):
    exp = PackageExporter(tmp_path / "p.zip", provider=DictProvider(MODEL_SOURCES))
    exp.mock(["numpy", "scipy.**"])
    exp.save_module("net")
    report = exp.dependency_report()
    assert "intern   layers  <- import in net <- explicitly saved" in report
    assert "mock     scipy.signal" in report and "extern   nt" in report


# -- importer --

@pytest.fixture
def model_archive(tmp_path):
    path = tmp_path / "model.zip"
    importer = export(path, MODEL_SOURCES, mock=["numpy", "scipy.**"], build=build_net)
    return path, importer


def test_malformed_archives(tmp_path):
    junk = tmp_path / "junk.zip"
    junk.write_bytes(b"not a zip")
    with pytest.raises(FormatError):
        HermeticImporter(Interpreter(), junk)
    nolist = tmp_path / "nolist.zip"
    with zipfile.ZipFile(nolist, "w") as zf:
        zf.writestr("code/a.ms", "x = 1\n")
    with pytest.raises(FormatError):
        HermeticImporter(Interpreter(), nolist)
    with pytest.raises(FileNotFoundError):
        HermeticImporter(Interpreter(), tmp_path / "absent.zip")


def test_new_importer_is_empty(model_archive):
    path, _ = model_archive
    imp = HermeticImporter(Interpreter(), path)
    assert imp.modules == {}


def test_import_nt_is_the_shared_native_module(model_archive):
    path, _ = model_archive
    interp = Interpreter()
    imp = HermeticImporter(interp, path)
    assert imp.import_module("nt") is interp.native_modules["nt"]


def test_import_is_memoized_and_hermetic(model_archive):
    path, _ = model_archive
    interp = Interpreter()
    imp = HermeticImporter(interp, path)
    net = imp.import_module("net")
    assert imp.import_module("net") is net
    assert set(imp.modules) == {"net", "layers", "nt", "numpy", "scipy.signal"}
    assert interp.modules == {}
    assert set(interp.system_import_log) <= Archive.open(path).extern_modules


def test_import_error_names_module_and_archive(model_archive):
    path, _ = model_archive
    with pytest.raises(ImportError) as info:
        HermeticImporter(Interpreter(), path).import_module("nowhere")
    assert "nowhere" in str(info.value) and str(path) in str(info.value)


def test_mocked_modules_import_but_fail_on_use(model_archive):
    path, _ = model_archive
    imp = HermeticImporter(Interpreter(), path)
    np_mod = imp.import_module("numpy")
    mock = np_mod.get_attr("linalg").path
    assert mock == ("linalg",)
    sub = imp.import_module("numpy.random")  # any dotted suffix of a mocked name is mocked
    with pytest.raises(MockUsedError, match="numpy.random.randn"):
        imp.interp.call_value(sub.get_attr("randn"), [])


def test_load_pickle_matches_unpackaged_output(model_archive):
    path, authoring = model_archive
    values = build_net(authoring)
    ref = authoring.interp.call_value(values["model/model.pkl"], [values["model/eg.pkl"]])
    imp = HermeticImporter(Interpreter(), path)
    model = imp.load_pickle("model", "model.pkl")
    eg = imp.load_pickle("model", "eg.pkl")
    out = imp.interp.call_value(model, [eg])
    assert np.array_equal(out.numpy(), ref.numpy())


def test_second_load_shares_blobs(model_archive):
    path, _ = model_archive
    imp = HermeticImporter(Interpreter(), path)
    first = imp.load_pickle("model", "model.pkl")
    before = blobstore.blob_stats()
    second = imp.load_pickle("model", "model.pkl")
    after = blobstore.blob_stats()
    assert after.total_bytes == before.total_bytes and after.count == before.count
    assert first is not second
    assert first.attrs["a"].attrs["weight"].key == second.attrs["a"].attrs["weight"].key


def test_load_pickle_using_mock_at_construction(tmp_path):
    sources = {"m": "import numpy\nclass Holder:\n    pass\n", "numpy": "class Thing:\n    pass\n"}

    def build(importer):
        interp = importer.interp
        thing = interp.call_value(importer.import_module("numpy").get_attr("Thing"))
        holder = interp.call_value(importer.import_module("m").get_attr("Holder"))
        holder.attrs["t"] = thing
        return {"p/holder.pkl": holder}

    path = tmp_path / "p.zip"
    export(path, sources, mock=["numpy"], build=build)
    imp = HermeticImporter(Interpreter(), path)
    with pytest.raises(MockUsedError, match="numpy.Thing"):
        imp.load_pickle("p", "holder.pkl")


def test_extern_modules_resolve_via_system_registry(tmp_path):
    sources = {"m": "import hostlib\nclass C:\n    def get(self):\n        return hostlib.VALUE\n"}
    interp = Interpreter()
    interp.register_module("hostlib", "VALUE = 7\n")
    importer = SourceImporter(interp, DictProvider(sources))
    c = interp.call_value(importer.import_module("m").get_attr("C"))
    path = tmp_path / "p.zip"
    with PackageExporter(path, importers=[importer]) as exp:
        exp.extern(["hostlib"])
        exp.save_pickle("p", "c.pkl", c)
    assert Archive.open(path).extern_modules == {"nt", "hostlib"}
    target = Interpreter()
    target.register_module("hostlib", "VALUE = 8\n")
    imp = HermeticImporter(target, path)
    obj = imp.load_pickle("p", "c.pkl")
    assert target.call_value(target.get_attr(obj, "get")) == 8
    assert imp.import_module("hostlib") is target.modules["hostlib"]
    assert set(target.system_import_log) <= {"nt", "hostlib"}
    # no host provider: import fails, naming the module
    with pytest.raises(ImportError, match="hostlib"):
        HermeticImporter(Interpreter(), path).load_pickle("p", "c.pkl")


def test_same_class_name_in_two_archives(tmp_path):
    a, b = tmp_path / "a.zip", tmp_path / "b.zip"
    for path, k in ((a, 2), (b, 3)):
        sources = {"models": f"class Resnet:\n    def __call__(self, x):\n        return x * {k}\n"}
        export(path, sources, build=lambda imp: {"m/r.pkl": imp.interp.call_value(imp.import_module("models").get_attr("Resnet"))})
    interp = Interpreter()
    ia, ib = HermeticImporter(interp, a), HermeticImporter(interp, b)
    ra, rb = ia.load_pickle("m", "r.pkl"), ib.load_pickle("m", "r.pkl")
    assert ra.cls is not rb.cls and ra.cls.qualname == rb.cls.qualname == "models.Resnet"
    assert [interp.call_value(r, [5]) for r in (ra, rb, ra, rb)] == [10, 15, 10, 15]


def test_reexport_fixpoint(model_archive, tmp_path):
    path, _ = model_archive
    imp = HermeticImporter(Interpreter(), path)
    model = imp.load_pickle("model", "model.pkl")
    again = tmp_path / "again.zip"
    with PackageExporter(again, importers=[imp]) as exp:
        exp.mock(["numpy", "scipy.**"])
        exp.save_pickle("model", "model.pkl", model)
    imp2 = HermeticImporter(imp.interp, again)
    model2 = imp2.load_pickle("model", "model.pkl")
    # classes come from the second importer, weights are equal by value
    assert model2.cls is imp2.import_module("net").get_attr("Net")
    w1 = model.attrs["a"].attrs["weight"].numpy()
    w2 = model2.attrs["a"].attrs["weight"].numpy()
    assert np.array_equal(w1, w2)
    assert imp.interp.modules == {}


def test_importer_is_visible_to_scripts(model_archive):
    path, _ = model_archive
    interp = Interpreter()
    imp = HermeticImporter(interp, path)
    load = interp.get_attr(imp, "load_pickle")
    model = interp.call_value(load, ["model", "model.pkl"])
    assert model.cls.qualname == "net.Net"


def test_importer_leaves_no_blobs_behind(model_archive, no_leaks):
    path, _ = model_archive
    imp = HermeticImporter(Interpreter(), path)
    imp.load_pickle("model", "model.pkl")
    del imp
    gc.collect()
