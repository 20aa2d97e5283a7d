"""Model checkpoints as JSON: a kind tag, the architecture, the flat
parameter array and free-form metadata.

Floats are written with ``repr`` precision by the json module, so a
save/load round trip reproduces parameters bit for bit.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np

from .dnnd import DnndModel
from .graph import Network
from .ndcn import NdcnModel

__all__ = ["network_fingerprint", "model_to_dict", "model_from_dict", "save_model", "load_model"]

FORMAT_VERSION = 1


def network_fingerprint(net: Network) -> str:
    """Short hash of the node count and edge list, used to pair models with networks."""
    h = hashlib.sha256()
    h.update(str(net.n).encode())
    h.update(np.ascontiguousarray(net.edges, dtype="<i8").tobytes())
    return h.hexdigest()[:16]


def model_to_dict(model, metadata=None) -> dict:
    if isinstance(model, DnndModel):
        arch = {"f_dims": list(model.f_dims), "g_dims": list(model.g_dims),
                "activation": model.activation, "input_scale": model.input_scale}
    elif isinstance(model, NdcnModel):
        arch = {"d": model.d, "enc_dims": list(model.enc_dims), "f_dims": list(model.f_dims),
                "dec_dims": list(model.dec_dims), "activation": model.activation}
    else:
        raise TypeError(f"cannot checkpoint {type(model).__name__}")
    return {
        "format": FORMAT_VERSION,
        "kind": model.kind,
        "n": model.n,
        "network": network_fingerprint(model.net),
        "architecture": arch,
        "params": [float(p) for p in model.params],
        "metadata": metadata or {},
    }


def model_from_dict(data: dict, net: Network, check_network=True):
    if data.get("format") != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format {data.get('format')!r}")
    if check_network and data["network"] != network_fingerprint(net):
        raise ValueError(f"checkpoint was trained on a different network "
                         f"({data['n']} nodes, fingerprint {data['network']})")
    arch = data["architecture"]
    params = np.array(data["params"], dtype=float)
    if data["kind"] == "dnnd":
        return DnndModel(net, tuple(arch["f_dims"]), tuple(arch["g_dims"]), arch["activation"], params,
                         arch["input_scale"])
    if data["kind"] == "ndcn":
        return NdcnModel(net, arch["d"], tuple(arch["enc_dims"]), tuple(arch["f_dims"]),
                         tuple(arch["dec_dims"]), arch["activation"], params)
    raise ValueError(f"unknown model kind {data['kind']!r}")


def save_model(path, model, metadata=None) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(model, metadata), fh, indent=1)
        fh.write("\n")


def load_model(path, net: Network, check_network=True):
    """Load a checkpoint for ``net``; a model trained on another network is refused
    unless ``check_network`` is False. Both model kinds are node-count agnostic."""
    with open(path) as fh:
        data = json.load(fh)
    return model_from_dict(data, net, check_network), data.get("metadata", {})
