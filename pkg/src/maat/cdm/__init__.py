"""Cognitive diagnosis models behind a model-agnostic contract."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence

import numpy as np

from ..environment import ConceptGraph, Record
from ..errors import DataFormatError, TrainingError
from .base import (CHECKPOINT_FORMAT_VERSION, DiagnosisModel, PretrainConfig,
                   UpdateConfig, bce, sigmoid)
from .irt import IrtModel
from .mirt import MirtModel
from .neural import NeuralCdmLite

MODEL_KINDS = ("irt", "mirt", "ncdm")

__all__ = [
    "DiagnosisModel", "IrtModel", "MirtModel", "NeuralCdmLite",
    "PretrainConfig", "UpdateConfig", "MODEL_KINDS",
    "pretrain", "load_model", "sigmoid", "bce",
]


def pretrain(model_kind: str, historical: Sequence[Record], graph: ConceptGraph,
             config: PretrainConfig | None = None) -> DiagnosisModel:
    """Fit question-side parameters on historical records; they freeze after this."""
    if not historical:
        raise TrainingError("historical record set is empty")
    if model_kind == "irt":
        return IrtModel.pretrain(historical, graph.n_questions, config)
    if model_kind == "mirt":
        return MirtModel.pretrain(historical, graph.n_questions, config)
    if model_kind == "ncdm":
        return NeuralCdmLite.pretrain(historical, graph, config)
    raise TrainingError(f"unknown model kind {model_kind!r}, expected one of {MODEL_KINDS}")


def load_model(path: str | Path) -> DiagnosisModel:
    """Load a ``model.<kind>.json`` checkpoint written by ``DiagnosisModel.save``."""
    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"invalid model checkpoint: {exc}", path=str(path)) from None
    version = payload.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise DataFormatError(f"unsupported checkpoint format_version {version!r}",
                              path=str(path))
    kind = payload.get("kind")
    params = payload.get("params", {})
    if kind == "irt":
        return IrtModel(np.array(params["discrimination"]), np.array(params["difficulty"]))
    if kind == "mirt":
        return MirtModel(np.array(params["discrimination"]), np.array(params["intercept"]))
    if kind == "ncdm":
        pairs = payload.get("graph")
        if not pairs:
            raise DataFormatError("ncdm checkpoint is missing the concept graph", path=str(path))
        n_q = 1 + max(q for q, _ in pairs)
        n_k = 1 + max(k for _, k in pairs)
        graph = ConceptGraph([(q, k) for q, k in pairs], n_q, n_k)
        return NeuralCdmLite(graph, np.array(params["difficulty"]),
                             np.array(params["discrimination"]), np.array(params["w1"]),
                             np.array(params["b1"]), np.array(params["w2"]),
                             float(params["b2"]))
    raise DataFormatError(f"unknown model kind {kind!r} in checkpoint", path=str(path))


def load_graph_from_checkpoint(path: str | Path) -> ConceptGraph | None:
    """Concept relation embedded in a checkpoint, when present."""
    payload = json.loads(Path(path).read_text())
    pairs = payload.get("graph")
    if not pairs:
        return None
    n_q = payload.get("n_questions", 1 + max(q for q, _ in pairs))
    n_k = 1 + max(k for _, k in pairs)
    return ConceptGraph([(q, k) for q, k in pairs], n_q, n_k)
