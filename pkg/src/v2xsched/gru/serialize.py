"""Self-describing weight files.

Layout: the magic ``V2XGRU\\0\\1``, a little-endian uint32 header length, a UTF-8 JSON
header (format version, model name, input dim, layer list with dims and activation
tags, extra metadata), then every parameter as row-major little-endian float64 in
header order.
"""
from __future__ import annotations

import json
import struct

import numpy as np

from .model import DenseLayer, GruLayer, GruModel, ShapeError

MAGIC = b"V2XGRU\x00\x01"
FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    pass


def save_model(model: GruModel, path) -> None:
    layers = []
    for layer in model.layers:
        entry = {"kind": layer.kind, "n_in": layer.n_in, "units": layer.units}
        if layer.kind == "dense":
            entry["activation"] = layer.activation
        entry["params"] = [[n, list(p.shape)] for n, p in zip(layer.param_names(), layer.params())]
        layers.append(entry)
    header = json.dumps({
        "version": FORMAT_VERSION,
        "name": model.name,
        "input_dim": model.input_dim,
        "layers": layers,
        "meta": model.meta,
    }, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for p in model.params():
            fh.write(np.ascontiguousarray(p, dtype="<f8").tobytes())


def load_model(path, expect_name: str | None = None, expect_input_dim: int | None = None) -> GruModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[: len(MAGIC)] != MAGIC:
        raise ModelFormatError(f"{path}: not a GRU weight file")
    off = len(MAGIC)
    if len(blob) < off + 4:
        raise ModelFormatError(f"{path}: truncated header")
    (n,) = struct.unpack("<I", blob[off : off + 4])
    off += 4
    try:
        header = json.loads(blob[off : off + n].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"{path}: corrupt header ({exc})") from None
    off += n
    if header.get("version") != FORMAT_VERSION:
        raise ModelFormatError(f"{path}: unsupported format version {header.get('version')}")
    layers = []
    for k, entry in enumerate(header["layers"]):
        if entry["kind"] == "gru":
            layer = GruLayer(entry["n_in"], entry["units"])
        elif entry["kind"] == "dense":
            layer = DenseLayer(entry["n_in"], entry["units"], entry["activation"])
        else:
            raise ModelFormatError(f"layer {k}: unknown kind {entry['kind']!r}")
        for (pname, shape), p in zip(entry["params"], layer.params()):
            if tuple(shape) != p.shape:
                raise ShapeError(f"layer {k} ({entry['kind']}) param {pname}: shape {shape} != {list(p.shape)}")
            size = p.size * 8
            if off + size > len(blob):
                raise ModelFormatError(f"{path}: truncated at layer {k} param {pname}")
            p[...] = np.frombuffer(blob, dtype="<f8", count=p.size, offset=off).reshape(p.shape)
            off += size
        layers.append(layer)
    if off != len(blob):
        raise ModelFormatError(f"{path}: {len(blob) - off} trailing bytes")
    try:
        model = GruModel(header["name"], layers, header["input_dim"], header.get("meta"))
    except ShapeError as exc:
        raise ShapeError(f"{path}: {exc}") from None
    if expect_name is not None and model.name != expect_name:
        raise ShapeError(f"{path}: holds the {model.name!r} model, expected {expect_name!r}")
    if expect_input_dim is not None and model.input_dim != expect_input_dim:
        raise ShapeError(f"{path}: input dim {model.input_dim}, expected {expect_input_dim}")
    return model


def check_architecture(model: GruModel, architecture: list) -> None:
    """Raise ShapeError naming the first layer that differs from ``architecture``."""
    if len(model.layers) != len(architecture):
        raise ShapeError(f"{model.name}: {len(model.layers)} layers, expected {len(architecture)}")
    for k, (layer, spec) in enumerate(zip(model.layers, architecture)):
        want_act = spec[2] if spec[0] == "dense" and len(spec) > 2 else "linear"
        if layer.kind != spec[0] or layer.units != spec[1] or (
            layer.kind == "dense" and layer.activation != want_act
        ):
            raise ShapeError(f"{model.name}: layer {k} is {layer.kind} {layer.units}, expected {spec}")
