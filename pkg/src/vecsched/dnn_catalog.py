"""DNN task descriptors: layer geometry, per-layer workload, and data sizes.

A model is an ordered chain of convolution/pooling stages followed by fully
connected stages.  Workloads count floating-point operations; data sizes count
the bytes of a layer's input tensor, which is what crosses the radio link when
execution is split at that layer.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path


class ModelError(ValueError):
    """Malformed or inconsistent model descriptor."""


@dataclass(frozen=True)
class ConvPool:
    """Convolution/pooling stage with input H x W x C_in and C_out filters of side ker."""

    h: int
    w: int
    c_in: int
    c_out: int
    ker: int

    def __post_init__(self) -> None:
        for name in ("h", "w", "c_in", "c_out", "ker"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ModelError(f"conv layer field {name}={v!r} must be an integer >= 1")


@dataclass(frozen=True)
class FullyConnected:
    """Dense stage mapping a u_in vector to a u_out vector."""

    u_in: int
    u_out: int

    def __post_init__(self) -> None:
        for name in ("u_in", "u_out"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ModelError(f"fc layer field {name}={v!r} must be an integer >= 1")


LayerSpec = ConvPool | FullyConnected


def layer_workload(layer: LayerSpec) -> int:
    """FLOPs to execute one layer, in exact integer arithmetic."""
    if isinstance(layer, ConvPool):
        return 2 * layer.h * layer.w * (layer.c_in * layer.ker**2 + 1) * layer.c_out
    return (2 * layer.u_in - 1) * layer.u_out


def layer_input_bytes(layer: LayerSpec, rho: int) -> int:
    """Bytes of the layer's input tensor at ``rho`` bytes per element."""
    if rho <= 0:
        raise ModelError(f"rho={rho!r} must be a positive byte count")
    if isinstance(layer, ConvPool):
        return layer.h * layer.w * layer.c_in * rho
    return layer.u_in * rho


@dataclass(frozen=True)
class DnnModel:
    """Layer chain with cached per-layer workloads and input sizes.

    Layers ``1..l_con`` are ConvPool and the remainder FullyConnected.
    ``workloads[l-1]`` / ``input_bytes[l-1]`` cache layer ``l``'s FLOPs and
    input bytes.  Instances are immutable and safe to share across workers.
    """

    type_id: int
    layers: tuple[LayerSpec, ...]
    l_con: int
    rho: int
    workloads: tuple[int, ...]
    input_bytes: tuple[int, ...]

    @classmethod
    def build(cls, type_id: int, layers: tuple[LayerSpec, ...] | list[LayerSpec], rho: int) -> "DnnModel":
        layers = tuple(layers)
        if not layers:
            raise ModelError("model needs at least one layer")
        if rho <= 0:
            raise ModelError(f"rho={rho!r} must be a positive byte count")
        is_conv = [isinstance(l, ConvPool) for l in layers]
        if not is_conv[0]:
            raise ModelError("first layer must be a conv/pool stage")
        l_con = 0
        while l_con < len(layers) and is_conv[l_con]:
            l_con += 1
        if any(is_conv[l_con:]):
            raise ModelError("conv/pool stage found after a fully connected stage")
        return cls(
            type_id=type_id,
            layers=layers,
            l_con=l_con,
            rho=rho,
            workloads=tuple(layer_workload(l) for l in layers),
            input_bytes=tuple(layer_input_bytes(l, rho) for l in layers),
        )

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    @property
    def total_workload(self) -> int:
        return sum(self.workloads)


def partition_workloads(model: DnnModel, phi: int) -> tuple[int, int]:
    """Split the model's workload at partition point ``phi``.

    Layers before ``phi`` run locally, layers from ``phi`` on run remotely;
    ``phi = 1`` is full offload and ``phi = n_layers + 1`` full local.
    """
    if not 1 <= phi <= model.n_layers + 1:
        raise ModelError(f"phi={phi} out of range 1..{model.n_layers + 1}")
    local = sum(model.workloads[: phi - 1])
    return local, model.total_workload - local


def _parse_layer(entry: dict, index: int) -> LayerSpec:
    if not isinstance(entry, dict) or "kind" not in entry:
        raise ModelError(f"layer {index}: expected an object with a 'kind' field")
    kind = entry["kind"]
    try:
        if kind == "conv":
            return ConvPool(h=entry["H"], w=entry["W"], c_in=entry["c_in"],
                            c_out=entry["c_out"], ker=entry["ker"])
        if kind == "fc":
            return FullyConnected(u_in=entry["u_in"], u_out=entry["u_out"])
    except KeyError as exc:
        raise ModelError(f"layer {index}: missing field {exc}") from exc
    raise ModelError(f"layer {index}: unknown kind {kind!r}")


def load_model(source: str | Path, type_id: int | None = None) -> DnnModel:
    """Load a model descriptor from a JSON file.

    Schema: ``{"type_id": int, "rho_bytes": int, "layers": [...]}`` with layer
    entries ``{"kind": "conv", "H", "W", "c_in", "c_out", "ker"}`` or
    ``{"kind": "fc", "u_in", "u_out"}``.  ``type_id`` overrides the file's id
    (scenarios index model types by position).
    """
    path = Path(source)
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelError(f"cannot parse model descriptor {path}: {exc}") from exc
    if not isinstance(raw, dict) or "layers" not in raw:
        raise ModelError(f"{path}: descriptor must be an object with a 'layers' list")
    layers = [_parse_layer(e, i + 1) for i, e in enumerate(raw["layers"])]
    tid = raw.get("type_id", 0) if type_id is None else type_id
    return DnnModel.build(type_id=tid, layers=layers, rho=raw.get("rho_bytes", 4))


BUNDLED_MODELS = ("alexnet", "resnet18", "vgg16")


def bundled_model_path(name: str) -> Path:
    """Path of a descriptor shipped with the package."""
    if name not in BUNDLED_MODELS:
        raise ModelError(f"unknown bundled model {name!r}; available: {BUNDLED_MODELS}")
    return Path(str(resources.files("vecsched").joinpath(f"models/{name}.json")))


def load_bundled(name: str, type_id: int | None = None) -> DnnModel:
    return load_model(bundled_model_path(name), type_id=type_id)
