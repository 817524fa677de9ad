"""Synthetic benchmark models: generation, loading and a native (interpreter-free) forward."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from pathlib import Path

from .. import blobstore
from ..blobstore import Tensor
from ..package import DirectoryProvider, HermeticImporter, PackageExporter, SourceImporter
from ..script import Instance, Interpreter

MODEL_SRC = Path(__file__).with_name("model_src")
MODELS = ("large", "small", "identity")

# modules the net imports for offline tooling only
FALSE_DEPS = ["numpy", "scipy.**"]


@dataclass(frozen=True)
class SyntheticModel:
    name: str
    width: int
    depth: int
    batch: int
    # weights are (uniform[0, 1) - shift) * gain
    shift: float = 0.5
    gain: float = 0.0


SPECS = {
    # zero mean, He-style variance: var(U - 0.5) = 1/12
    "large": SyntheticModel("large", 512, 4, 64, 0.5, math.sqrt(24.0 / 512)),
    # 96 narrow layers decay to zero under zero-mean weights; a positive mean
    # of 0.2 * gain per entry keeps the dominant eigenvalue near 1
    "small": SyntheticModel("small", 8, 96, 8, 0.3, 1.0 / (0.2 * 8)),
    "identity": SyntheticModel("identity", 0, 0, 0),
}


def archive_path(out_dir, model: str) -> Path:
    return Path(out_dir) / f"{model}.zip"


def authoring_env() -> tuple[Interpreter, SourceImporter]:
    interp = Interpreter()
    return interp, SourceImporter(interp, DirectoryProvider(MODEL_SRC))


def build_model(model: str, seed: int, importer: SourceImporter):
    """The in-memory model and its example input, built on the authoring interpreter."""
    spec = SPECS[model]
    interp = importer.interp
    if model == "identity":
        cls = importer.import_module("identity").get_attr("Identity")
        return interp.call_value(cls), blobstore.from_list([[1.0, -2.0], [3.5, 0.25]])
    build = importer.import_module("net").get_attr("build")
    net = interp.call_value(build, [spec.width, spec.depth, seed, spec.shift, spec.gain])
    eg = blobstore.rand([spec.batch, spec.width], seed + 1_000_003)
    return net, eg


def gen_models(out_dir, seed: int = 0, models=MODELS) -> dict[str, Path]:
    """Write one archive per model with ``model/model.pkl`` and ``model/eg.pkl``."""
    out_dir = Path(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    _, importer = authoring_env()
    paths = {}
    for model in models:
        net, eg = build_model(model, seed, importer)
        path = archive_path(out_dir, model)
        with PackageExporter(path, importers=[importer]) as exp:
            exp.mock(FALSE_DEPS)
            exp.save_pickle("model", "model.pkl", net)
            exp.save_pickle("model", "eg.pkl", eg)
        paths[model] = path
    return paths


def load_direct(path):
    """Model and example input loaded on a private interpreter (no manager)."""
    imp = HermeticImporter(Interpreter(), path)
    return imp, imp.load_pickle("model", "model.pkl"), imp.load_pickle("model", "eg.pkl")


class NativeModel:
    """The same kernel sequence as the scripted net, called straight from host code."""

    def __init__(self, weights: list[Tensor]):
        self.weights = list(weights)

    @classmethod
    def from_archive(cls, path) -> NativeModel:
        _, net, _ = load_direct(path)
        return cls(extract_weights(net))

    def __call__(self, x: Tensor) -> Tensor:
        for w in self.weights:
            x = blobstore.relu(blobstore.matmul(x, w))
        return x


def extract_weights(net) -> list[Tensor]:
    if not isinstance(net, Instance) or "layers" not in net.attrs:
        return []
    return [layer.attrs["weight"] for layer in net.attrs["layers"]]
