"""Versioned JSON model files.

Layout::

    {"format": "difflstm-model", "version": 1,
     "hidden": int, "horizon": int, "input_dim": int,
     "config": {...},                       # free-form echo of the training config
     "tensors": {name: {"shape": [...], "data": [row-major floats]}}}

Floats are written with ``repr`` precision, so a reload is bit-exact.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import CorruptFileError, VersionError
from .model import PARAM_NAMES, ModelParams

FORMAT = "difflstm-model"
VERSION = 1


def dumps(params: ModelParams, config: dict | None = None) -> str:
    doc = {
        "format": FORMAT,
        "version": VERSION,
        "hidden": params.hidden,
        "horizon": params.horizon,
        "input_dim": params.input_dim,
        "config": config or {},
        "tensors": {n: {"shape": list(params[n].shape), "data": params[n].ravel().tolist()}
                    for n in PARAM_NAMES},
    }
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def loads(text: str) -> tuple[ModelParams, dict]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CorruptFileError(f"model file is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise CorruptFileError("not a difflstm model file")
    version = doc.get("version")
    if version != VERSION:
        raise VersionError(f"model file version {version!r} is not supported (expected {VERSION})")
    try:
        tensors = {n: np.asarray(t["data"], dtype=np.float64).reshape(t["shape"])
                   for n, t in doc["tensors"].items()}
        params = ModelParams.from_tensors(tensors, int(doc["hidden"]), int(doc["horizon"]), int(doc["input_dim"]))
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise CorruptFileError(f"model file is malformed: {exc}") from exc
    return params, doc.get("config", {})


def save(params: ModelParams, path, config: dict | None = None) -> None:
    Path(path).write_text(dumps(params, config))


def load(path) -> tuple[ModelParams, dict]:
    return loads(Path(path).read_text())
