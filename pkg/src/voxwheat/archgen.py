"""3D-CNN architecture specs for the monitored grid search.

A spec lists neurons per conv block and per hidden dense layer; the 1-neuron
output layer is implicit. Every conv except the last is followed by a 2x2x2
max pool. Valid specs use neuron counts from ``NEURONS``, non-increasing
along both the conv and the dense stack.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations_with_replacement
from typing import Optional

from .errors import SampleError, ShapeError, SpecDocumentError

CONV_DEPTHS = (3, 4, 5, 6)
DENSE_DEPTHS = (1, 2, 3, 4, 5, 6)  # hidden layers, output layer excluded
NEURONS = (128, 64, 32, 16, 8)
TASKS = ("detection", "regression")
OPTIMIZERS = ("rmsprop", "adam")
HEADS = {"detection": "sigmoid", "regression": "relu"}
KERNEL = (3, 3, 3)
POOL = (2, 2, 2)

TASK_DEFAULTS = {
    "detection": {"optimizer": "rmsprop", "learning_rate": 5e-4,
                  "input_dims": (75, 300, 95, 3)},
    "regression": {"optimizer": "adam", "learning_rate": 1e-3,
                   "input_dims": (161, 51, 93, 3)},
}

# Architectures reported for the four tasks: (model, conv, dense, optimizer).
REFERENCE_ARCHITECTURES = {
    "detection": [
        (1, (16, 8, 8), (128, 64, 8, 8), "rmsprop"),
        (2, (64, 64, 64, 32, 8), (128, 32, 8), "rmsprop"),
        (3, (32, 32, 8, 8), (128, 64, 32), "rmsprop"),
        (4, (64, 64, 16), (128, 128, 32), "rmsprop"),
        (5, (32, 16, 16, 8), (32, 16), "rmsprop"),
        (6, (64, 64, 64, 16), (16,), "rmsprop"),
        (7, (64, 16, 16, 16), (32, 64, 16), "rmsprop"),
        (8, (32, 32, 32, 32, 16), (128, 64, 32, 16), "rmsprop"),
        (9, (32, 32, 32, 16, 16), (64, 32, 16, 8), "rmsprop"),
        (10, (32, 32, 32, 8, 8), (64, 32, 16), "rmsprop"),
        (11, (32, 32, 32, 32, 16), (128, 64), "rmsprop"),
        (12, (16, 8, 8, 32, 64), (32,), "rmsprop"),
        (13, (64, 64, 8, 8, 8), (32, 16), "rmsprop"),
        (14, (64, 32, 8), (128, 32, 16, 8), "rmsprop"),
        (15, (64, 64, 32), (128, 16, 8), "rmsprop"),
        (16, (64, 16, 8, 8), (16, 8), "rmsprop"),
        (17, (32, 32, 32, 16), (128,), "rmsprop"),
        (18, (32, 32), (8, 8, 8), "rmsprop"),
        (19, (32, 32, 16, 16, 8), (32,), "rmsprop"),
        (20, (64, 32, 32), (128,), "rmsprop"),
    ],
    "spikelets": [
        (1, (32, 16), (128, 64, 8), "adam"),
        (2, (32, 32, 8), (128, 16), "adam"),
        (3, (32, 16, 16, 16), (64, 8), "adam"),
        (4, (32, 16, 8, 8, 8), (32, 32, 16), "adam"),
        (5, (32, 32, 32, 32), (128,), "adam"),
    ],
    "infected": [
        (1, (32, 32, 32, 16), (32, 8), "adam"),
        (2, (32, 32, 32, 16), (32, 8), "rmsprop"),
        (3, (64, 32, 32, 32), (32,), "adam"),
    ],
    "severity": [
        (1, (32, 32, 32, 16), (64, 32, 8), "rmsprop"),
        (2, (32, 32, 32, 32), (64, 32, 8), "rmsprop"),
        (3, (32, 32, 32, 32), (32,), "rmsprop"),
    ],
}
REFERENCE_TASKS = {"detection": "detection", "spikelets": "regression",
                   "infected": "regression", "severity": "regression"}


@dataclass(frozen=True)
class ModelSpec:
    conv_neurons: tuple
    dense_neurons: tuple
    task: str = "detection"
    optimizer: Optional[str] = None
    learning_rate: Optional[float] = None
    input_dims: Optional[tuple] = None
    head_activation: Optional[str] = None
    hidden_activation: str = "relu"
    kernel: tuple = KERNEL
    pool: tuple = POOL

    def __post_init__(self):
        object.__setattr__(self, "conv_neurons", tuple(int(n) for n in self.conv_neurons))
        object.__setattr__(self, "dense_neurons", tuple(int(n) for n in self.dense_neurons))
        defaults = TASK_DEFAULTS.get(self.task, {})
        for name in ("optimizer", "learning_rate", "input_dims"):
            if getattr(self, name) is None and name in defaults:
                object.__setattr__(self, name, defaults[name])
        if self.head_activation is None and self.task in HEADS:
            object.__setattr__(self, "head_activation", HEADS[self.task])
        if self.input_dims is not None:
            object.__setattr__(self, "input_dims", tuple(int(d) for d in self.input_dims))

    @property
    def all_dense(self) -> tuple:
        """Dense widths including the 1-neuron output layer."""
        return self.dense_neurons + (1,)

    @property
    def depth(self) -> int:
        return len(self.conv_neurons) + len(self.all_dense)


@dataclass(frozen=True)
class Violation:
    rule: str
    message: str
    position: Optional[int] = None


def _monotone_violations(name, values):
    out = []
    for i in range(1, len(values)):
        if values[i] > values[i - 1]:
            out.append(Violation(
                "monotonicity",
                f"{name} neurons increase at position {i + 1} ({values[i - 1]} -> {values[i]})",
                i + 1))
    return out


def validate(spec: ModelSpec) -> list:
    """Every violated constraint; an empty list means the spec is valid."""
    v = []
    if len(spec.conv_neurons) not in CONV_DEPTHS:
        v.append(Violation("conv_depth",
                           f"{len(spec.conv_neurons)} conv layers, allowed {CONV_DEPTHS}"))
    if len(spec.dense_neurons) not in DENSE_DEPTHS:
        v.append(Violation("dense_depth",
                           f"{len(spec.dense_neurons)} hidden dense layers, allowed {DENSE_DEPTHS}"))
    for name, values in (("conv", spec.conv_neurons), ("dense", spec.dense_neurons)):
        for i, n in enumerate(values):
            if n not in NEURONS:
                v.append(Violation("neurons", f"{name} layer {i + 1} has {n} neurons, allowed {NEURONS}",
                                   i + 1))
        v.extend(_monotone_violations(name, values))
    if spec.task not in TASKS:
        v.append(Violation("task", f"unknown task {spec.task!r}"))
    elif spec.head_activation != HEADS[spec.task]:
        v.append(Violation("head", f"{spec.task} head must be {HEADS[spec.task]}"))
    if spec.hidden_activation != "relu":
        v.append(Violation("activation", "hidden activation must be relu"))
    if spec.optimizer not in OPTIMIZERS:
        v.append(Violation("optimizer", f"unknown optimizer {spec.optimizer!r}"))
    if spec.learning_rate is None or not spec.learning_rate > 0:
        v.append(Violation("learning_rate", "learning rate must be > 0"))
    if tuple(spec.kernel) != KERNEL or tuple(spec.pool) != POOL:
        v.append(Violation("geometry", f"kernel must be {KERNEL} and pool {POOL}"))
    return v


def is_valid(spec: ModelSpec) -> bool:
    return not validate(spec)


@lru_cache(maxsize=None)
def descending_stacks(depths: tuple) -> tuple:
    """All non-increasing neuron sequences with a length in ``depths``."""
    return tuple(seq for d in depths for seq in combinations_with_replacement(NEURONS, d))


def space_size() -> int:
    return len(descending_stacks(CONV_DEPTHS)) * len(descending_stacks(DENSE_DEPTHS))


def unconstrained_space_size() -> int:
    """Size of the search grid when the ordering rule is dropped."""
    k = len(NEURONS)
    return sum(k ** d for d in CONV_DEPTHS) * sum(k ** d for d in DENSE_DEPTHS)


def spec_at(index: int, task: str = "detection", **overrides) -> ModelSpec:
    convs = descending_stacks(CONV_DEPTHS)
    denses = descending_stacks(DENSE_DEPTHS)
    ci, di = divmod(index, len(denses))
    return ModelSpec(convs[ci], denses[di], task=task, **overrides)


def sample_batch(seed, batch_size: int, task: str = "detection", **overrides) -> list:
    """``batch_size`` distinct valid specs drawn uniformly without replacement.

    Valid specs are enumerated once, so drawing indices is rejection-free.
    """
    if task not in TASKS:
        raise SampleError(f"unknown task {task!r}")
    total = space_size()
    if batch_size < 1:
        raise SampleError("batch size must be >= 1")
    if batch_size > total:
        raise SampleError(f"only {total} distinct valid architectures exist")
    rng = random.Random(seed)
    return [spec_at(i, task, **overrides) for i in rng.sample(range(total), batch_size)]


# --------------------------------------------------------------------------
# parameter counting

@dataclass(frozen=True)
class Layer:
    kind: str
    output: tuple
    params: int


def layer_table(spec: ModelSpec) -> list:
    """Walk the network. Convs use same padding, pools are 2x2x2 stride 2 with floor."""
    if spec.input_dims is None or len(spec.input_dims) != 4:
        raise ShapeError("input_dims must be (w, h, d, channels)")
    *spatial, channels = spec.input_dims
    kvol = math.prod(spec.kernel)
    layers = []
    last = len(spec.conv_neurons) - 1
    for i, c_out in enumerate(spec.conv_neurons):
        if min(spatial) < 1:
            raise ShapeError(f"spatial dims {tuple(spatial)} collapse before conv {i + 1}")
        layers.append(Layer("conv3d", (*spatial, c_out), (kvol * channels + 1) * c_out))
        channels = c_out
        if i < last:
            spatial = [s // p for s, p in zip(spatial, spec.pool)]
            layers.append(Layer("maxpool3d", (*spatial, channels), 0))
    n_in = math.prod(spatial) * channels
    layers.append(Layer("flatten", (n_in,), 0))
    for n_out in spec.all_dense:
        layers.append(Layer("dense", (n_out,), (n_in + 1) * n_out))
        n_in = n_out
    return layers


def param_count(spec: ModelSpec) -> int:
    return sum(layer.params for layer in layer_table(spec))


# --------------------------------------------------------------------------
# spec documents

DOC_KEYS = ("task", "input_dims", "conv", "dense", "kernel", "pool",
            "hidden_activation", "head_activation", "optimizer", "learning_rate")


def _ints(values):
    return ",".join(str(v) for v in values)


def emit_spec(spec: ModelSpec) -> str:
    problems = validate(spec)
    if problems:
        raise SpecDocumentError("refusing to emit invalid spec: "
                                + "; ".join(p.message for p in problems))
    values = {
        "task": spec.task,
        "input_dims": _ints(spec.input_dims) if spec.input_dims else "",
        "conv": _ints(spec.conv_neurons),
        "dense": _ints(spec.all_dense),
        "kernel": _ints(spec.kernel),
        "pool": _ints(spec.pool),
        "hidden_activation": spec.hidden_activation,
        "head_activation": spec.head_activation,
        "optimizer": spec.optimizer,
        "learning_rate": repr(float(spec.learning_rate)),
    }
    return "".join(f"{k} = {values[k]}\n" for k in DOC_KEYS)


def _parse_ints(key, text):
    try:
        return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise SpecDocumentError(f"{key}: expected comma-separated integers, got {text!r}") from None


def parse_spec(text: str) -> ModelSpec:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or key not in DOC_KEYS:
            raise SpecDocumentError(f"line {lineno}: unexpected entry {line!r}")
        if key in values:
            raise SpecDocumentError(f"line {lineno}: duplicate key {key!r}")
        values[key] = value.strip()
    missing = [k for k in DOC_KEYS if k not in values]
    if missing:
        raise SpecDocumentError(f"missing keys: {', '.join(missing)}")
    dense = _parse_ints("dense", values["dense"])
    if not dense or dense[-1] != 1:
        raise SpecDocumentError("dense list must end with the 1-neuron output layer")
    try:
        lr = float(values["learning_rate"])
    except ValueError:
        raise SpecDocumentError(f"bad learning_rate {values['learning_rate']!r}") from None
    return ModelSpec(
        conv_neurons=_parse_ints("conv", values["conv"]),
        dense_neurons=dense[:-1],
        task=values["task"],
        optimizer=values["optimizer"],
        learning_rate=lr,
        input_dims=_parse_ints("input_dims", values["input_dims"]) or None,
        head_activation=values["head_activation"],
        hidden_activation=values["hidden_activation"],
        kernel=_parse_ints("kernel", values["kernel"]),
        pool=_parse_ints("pool", values["pool"]),
    )


def reference_specs(group: str) -> list:
    """(model number, ModelSpec) for one group of reported architectures."""
    task = REFERENCE_TASKS[group]
    return [(num, ModelSpec(conv, dense, task=task, optimizer=opt))
            for num, conv, dense, opt in REFERENCE_ARCHITECTURES[group]]
