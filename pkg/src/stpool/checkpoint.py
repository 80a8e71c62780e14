"""Self-describing text checkpoints.

Line 1 carries the format version and hidden size; the header block restates
the model configuration; each parameter record is ``param <name> <dims...>``
followed by row-major decimal values (one matrix row per line). Values are
written with shortest-roundtrip ``repr`` so reload is lossless.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError
from .model import Model, ModelConfig, init_model, named_buffers, named_parameters
from .representation import FeatureConfig

FORMAT_VERSION = 1


def _write_array(fh, kind: str, name: str, arr: np.ndarray) -> None:
    dims = " ".join(str(d) for d in arr.shape)
    fh.write(f"{kind} {name} {dims}\n")
    rows = arr.reshape(1, -1) if arr.ndim == 1 else arr
    for row in rows:
        fh.write(" ".join(repr(float(v)) for v in row))
        fh.write("\n")


def save_checkpoint(path, model: Model) -> None:
    cfg = model.config
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"stpool-checkpoint {FORMAT_VERSION} hidden {cfg.hidden}\n")
        fh.write(f"kind {cfg.kind}\n")
        fh.write(f"refinements {cfg.refinements}\n")
        fh.write(f"features {','.join(cfg.features.names())}\n")
        fh.write(f"lon_limit {cfg.lon_limit!r}\n")
        fh.write(f"lat_limit {cfg.lat_limit!r}\n")
        fh.write(f"history_seconds {cfg.history_seconds!r}\n")
        fh.write(f"future_steps {cfg.future_steps}\n")
        fh.write(f"dt {cfg.dt!r}\n")
        fh.write(f"noise_dim {cfg.noise_dim}\n")
        fh.write(f"noise_sigma {cfg.noise_sigma!r}\n")
        if model.decoder is not None:
            fh.write(f"output_gain {model.decoder.output_gain!r}\n")
        elif model.baseline is not None:
            fh.write(f"output_gain {model.baseline.decoder.output_gain!r}\n")
        fh.write("header_end\n")
        for name, tensor in named_parameters(model):
            _write_array(fh, "param", name, tensor.data)
        for name, buf in named_buffers(model):
            _write_array(fh, "buffer", name, buf)
        fh.write("end\n")


def load_checkpoint(path) -> Model:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DataError(f"{path}: empty checkpoint")
    head = lines[0].split()
    if len(head) != 4 or head[0] != "stpool-checkpoint" or head[2] != "hidden":
        raise DataError(f"{path}: not a stpool checkpoint (bad first line)")
    if int(head[1]) != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {head[1]}")
    hidden = int(head[3])
    header: dict[str, str] = {}
    i = 1
    while i < len(lines) and lines[i] != "header_end":
        key, _, value = lines[i].partition(" ")
        header[key] = value
        i += 1
    if i == len(lines):
        raise DataError(f"{path}: missing header_end")
    i += 1
    cfg = ModelConfig(
        kind=header.get("kind", "ust"),
        hidden=hidden,
        refinements=int(header.get("refinements", "2")),
        features=FeatureConfig.from_names(
            [f for f in header.get("features", "").split(",") if f]
        ),
        lon_limit=float(header.get("lon_limit", "90.0")),
        lat_limit=float(header.get("lat_limit", "15.0")),
        history_seconds=float(header.get("history_seconds", "3.0")),
        future_steps=int(header.get("future_steps", "6")),
        dt=float(header.get("dt", "0.5")),
        noise_dim=int(header.get("noise_dim", "0")),
        noise_sigma=float(header.get("noise_sigma", "1.0")),
    )
    model = init_model(cfg, seed=0)
    if "output_gain" in header:
        gain = float(header["output_gain"])
        if model.decoder is not None:
            model.decoder.output_gain = gain
        elif model.baseline is not None:
            model.baseline.decoder.output_gain = gain
    arrays: dict[str, np.ndarray] = {}
    while i < len(lines) and lines[i] != "end":
        fields = lines[i].split()
        if fields[0] not in ("param", "buffer") or len(fields) < 3:
            raise DataError(f"{path}: malformed record line {i + 1}: {lines[i]!r}")
        name = fields[1]
        dims = tuple(int(d) for d in fields[2:])
        n_lines = 1 if len(dims) == 1 else dims[0]
        if i + n_lines >= len(lines):
            raise DataError(f"{path}: truncated record for {name}")
        values = []
        for j in range(n_lines):
            values.append([float(v) for v in lines[i + 1 + j].split()])
        arr = np.array(values, dtype=np.float64)
        if arr.size != int(np.prod(dims)):
            raise DataError(f"{path}: record {name} has {arr.size} values, expected shape {dims}")
        arr = arr.reshape(dims)
        arrays[name] = arr
        i += 1 + n_lines
    if i == len(lines):
        raise DataError(f"{path}: missing end marker")
    for name, tensor in named_parameters(model):
        if name not in arrays:
            raise DataError(f"{path}: missing parameter {name}")
        if arrays[name].shape != tensor.data.shape:
            raise DataError(
                f"{path}: parameter {name} has shape {arrays[name].shape}, "
                f"expected {tensor.data.shape}"
            )
        tensor.data = arrays[name]
    for name, buf in named_buffers(model):
        if name not in arrays:
            raise DataError(f"{path}: missing buffer {name}")
        buf[...] = arrays[name]
    return model
