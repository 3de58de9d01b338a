"""MLP weights: JSON format, seeded synthetic generator, float reference pass.

Weights file format::

    {
      "layer_dims": [400, 120, 84, 10],
      "activation": "sigmoid",            # or "relu"
      "layers": [
        {"weights": [[...], ...],         # dims[k] x dims[k+1], row-major
         "biases": [...]},                # dims[k+1]
        ...
      ]
    }

``weights`` may also be a flat row-major list. Rows index inputs and columns
index outputs, matching crossbar rows and columns. Training is not part of
this tool; export trained weights into this format to evaluate them.

ReLU is the saturating variant clip(x, 0, 1), the range an analog neuron
can drive into the next layer's DAC. The output layer is linear and the
prediction is its argmax, lowest index on ties.
"""

from __future__ import annotations

import json
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from xbarcli.exceptions import InputError, WeightsFormatError

DEFAULT_LAYER_DIMS = (400, 120, 84, 10)
ACTIVATIONS = ("sigmoid", "relu")


@dataclass
class MlpWeights:
    """Fully connected network; matrices[k] has shape (dims[k], dims[k+1])."""

    layer_dims: list[int]
    matrices: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "sigmoid"
    meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.matrices = [np.asarray(m, dtype=float) for m in self.matrices]
        self.biases = [np.asarray(b, dtype=float) for b in self.biases]
        if self.activation not in ACTIVATIONS:
            raise WeightsFormatError(f"activation must be one of {ACTIVATIONS}")
        if len(self.layer_dims) < 2:
            raise WeightsFormatError("need at least input and output dims")
        n_layers = len(self.layer_dims) - 1
        if len(self.matrices) != n_layers or len(self.biases) != n_layers:
            raise WeightsFormatError(
                f"{len(self.layer_dims)} dims need {n_layers} layers, "
                f"got {len(self.matrices)} matrices and {len(self.biases)} bias vectors"
            )
        for k, (m, b) in enumerate(zip(self.matrices, self.biases, strict=True)):
            shape = (self.layer_dims[k], self.layer_dims[k + 1])
            if m.shape != shape:
                raise WeightsFormatError(f"layer {k}: weights {m.shape} != {shape}")
            if b.shape != (shape[1],):
                raise WeightsFormatError(f"layer {k}: biases {b.shape} != ({shape[1]},)")
            if not (np.all(np.isfinite(m)) and np.all(np.isfinite(b))):
                raise WeightsFormatError(f"layer {k}: non-finite entries")

    @property
    def n_layers(self) -> int:
        return len(self.matrices)

    def augmented(self, k: int) -> np.ndarray:
        """Layer k with its bias folded in as a last always-on input row."""
        return np.vstack([self.matrices[k], self.biases[k][None, :]])

    def to_dict(self) -> dict:
        return {
            "layer_dims": list(self.layer_dims),
            "activation": self.activation,
            "layers": [
                {"weights": m.tolist(), "biases": b.tolist()}
                for m, b in zip(self.matrices, self.biases, strict=True)
            ],
        }


def activate(x: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return np.clip(x, 0.0, 1.0)
    return 1.0 / (1.0 + np.exp(-x))


def float_forward(w: MlpWeights, image: Sequence[float] | np.ndarray) -> np.ndarray:
    """Reference forward pass; returns output-layer pre-activations."""
    a = np.asarray(image, dtype=float)
    if a.shape != (w.layer_dims[0],):
        raise WeightsFormatError(f"input length {a.size} != {w.layer_dims[0]}")
    for k in range(w.n_layers):
        z = a @ w.matrices[k] + w.biases[k]
        a = z if k == w.n_layers - 1 else activate(z, w.activation)
    return a


def float_predict(w: MlpWeights, images: np.ndarray) -> np.ndarray:
    """argmax of float_forward per image (lowest index on ties)."""
    return np.array([int(np.argmax(float_forward(w, x))) for x in images], dtype=int)


def synthetic_weights(
    layer_dims: Sequence[int] = DEFAULT_LAYER_DIMS,
    seed: int = 42,
    activation: str = "sigmoid",
    scale: float = 1.0,
) -> MlpWeights:
    """Seeded Gaussian weights, 1/sqrt(fan_in) scaled."""
    rng = np.random.default_rng(seed)
    dims = [int(d) for d in layer_dims]
    matrices = [
        rng.normal(0.0, scale / np.sqrt(dims[k]), size=(dims[k], dims[k + 1]))
        for k in range(len(dims) - 1)
    ]
    biases = [rng.normal(0.0, 0.1 * scale, size=dims[k + 1]) for k in range(len(dims) - 1)]
    return MlpWeights(dims, matrices, biases, activation, meta={"source": f"synthetic:{seed}"})


def zero_weights(layer_dims: Sequence[int] = DEFAULT_LAYER_DIMS) -> MlpWeights:
    dims = [int(d) for d in layer_dims]
    return MlpWeights(
        dims,
        [np.zeros((dims[k], dims[k + 1])) for k in range(len(dims) - 1)],
        [np.zeros(dims[k + 1]) for k in range(len(dims) - 1)],
    )


def load_weights(path: str | Path) -> MlpWeights:
    """
    Read a weights JSON file.

    Raises:
        InputError: file missing.
        WeightsFormatError: malformed JSON or inconsistent shapes.
    """
    p = Path(path)
    if not p.exists():
        raise InputError(f"weights file not found: {p}", details={"path": str(p)})
    try:
        raw = json.loads(p.read_text(encoding="utf-8"))
        dims = [int(d) for d in raw["layer_dims"]]
        matrices = []
        biases = []
        for k, layer in enumerate(raw["layers"]):
            m = np.asarray(layer["weights"], dtype=float)
            if m.ndim == 1:
                m = m.reshape(dims[k], dims[k + 1])
            matrices.append(m)
            biases.append(np.asarray(layer.get("biases", np.zeros(dims[k + 1])), dtype=float))
        return MlpWeights(dims, matrices, biases, str(raw.get("activation", "sigmoid")).lower())
    except WeightsFormatError:
        raise
    except (json.JSONDecodeError, KeyError, TypeError, ValueError, IndexError) as e:
        raise WeightsFormatError(f"invalid weights file {p}: {e}", details={"path": str(p)}) from e


def save_weights(w: MlpWeights, path: str | Path) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(json.dumps(w.to_dict()), encoding="utf-8")
    return p
