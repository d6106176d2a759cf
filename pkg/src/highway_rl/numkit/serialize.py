"""JSON persistence for named parameter sets.

File layout: one object mapping tensor name to {"shape": [...], "values":
[flat float64 list]}. Python's float repr round-trips doubles exactly, so a
save/load cycle is bit-exact.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping

import numpy as np

from ..errors import FormatError
from .tape import Param


def params_payload(params: Mapping[str, Param]) -> dict:
    return {
        name: {"shape": list(p.value.shape), "values": p.value.ravel().tolist()}
        for name, p in sorted(params.items())
    }


def save_params(params: Mapping[str, Param], path: str | Path) -> None:
    Path(path).write_text(json.dumps(params_payload(params), indent=1, sort_keys=True))


def params_from_payload(payload: dict) -> dict[str, Param]:
    out: dict[str, Param] = {}
    for name, entry in payload.items():
        try:
            shape = tuple(int(d) for d in entry["shape"])
            values = np.asarray(entry["values"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"malformed parameter entry {name!r}: {exc}") from exc
        if values.size != int(np.prod(shape)) if shape else values.size != 1:
            raise FormatError(
                f"parameter {name!r}: {values.size} values do not fill shape {shape}"
            )
        out[name] = Param(values.reshape(shape))
    return out


def load_params(path: str | Path) -> dict[str, Param]:
    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(payload, dict):
        raise FormatError(f"{path}: expected a JSON object of named tensors")
    return params_from_payload(payload)


def adopt_params(current: Mapping[str, Param], loaded: Mapping[str, Param]) -> None:
    """Copy loaded values into an existing architecture, validating every shape."""
    missing = sorted(set(current) - set(loaded))
    if missing:
        raise FormatError(f"loaded file is missing tensor {missing[0]!r}")
    extra = sorted(set(loaded) - set(current))
    if extra:
        raise FormatError(f"loaded file has unexpected tensor {extra[0]!r}")
    for name, p in current.items():
        lv = loaded[name].value
        if lv.shape != p.value.shape:
            raise FormatError(
                f"tensor {name!r}: file shape {lv.shape} does not match "
                f"architecture shape {p.value.shape}"
            )
    for name, p in current.items():
        p.value[...] = loaded[name].value
        p.grad[...] = 0.0
