"""
Learnable parameters of the toy backbone, the classifier and the CPCANet heads.
"""

from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from ..exceptions import ShapeMismatch
from ..schemas.training import TrainerConfig
from .matrices import Matrix

BACKBONE = "backbone"
CPCANET = "cpcanet"

# output layers of the two modulation MLPs; zero at init so gamma = 1 and delta_f = 0
MODULATION_OUTPUTS = ("gamma.W2", "gamma.b2", "shift.W2", "shift.b2")


@dataclass(frozen=True)
class LayerSpec:
    name: str
    shape: Tuple[int, int]
    group: str
    fan_in: int
    zero: bool = False


def layer_specs(config: TrainerConfig) -> List[LayerSpec]:
    """Every parameter array in init order."""
    p, hb = config.input_dim, config.backbone_hidden
    D, d, T = config.feature_dim, config.proj_dim, config.stages
    K, C, hh = config.n_domains, config.n_classes, config.hyper_hidden
    specs = [
        LayerSpec("h.W1", (p, hb), BACKBONE, p),
        LayerSpec("h.b1", (1, hb), BACKBONE, p),
        LayerSpec("h.W2", (hb, D), BACKBONE, hb),
        LayerSpec("h.b2", (1, D), BACKBONE, hb),
        LayerSpec("cls.W", (D, C), BACKBONE, D),
        LayerSpec("cls.b", (1, C), BACKBONE, D),
        LayerSpec("bn.W", (D, d), CPCANET, D),
        LayerSpec("bn.b", (1, d), CPCANET, D),
        LayerSpec("hyper.W1", (K * d * d, hh), CPCANET, K * d * d),
        LayerSpec("hyper.b1", (1, hh), CPCANET, K * d * d),
        LayerSpec("hyper.W2", (hh, T), CPCANET, hh),
        LayerSpec("hyper.b2", (1, T), CPCANET, hh),
    ]
    for prefix in ("gamma", "shift"):
        specs += [
            LayerSpec(f"{prefix}.W1", (d, D), CPCANET, d),
            LayerSpec(f"{prefix}.b1", (1, D), CPCANET, d),
            LayerSpec(f"{prefix}.W2", (D, D), CPCANET, D, zero=True),
            LayerSpec(f"{prefix}.b2", (1, D), CPCANET, D, zero=True),
        ]
    return specs


@dataclass
class ModelParams:
    """Named float64 arrays, each belonging to the backbone or the cpcanet group.

    Hidden layers are drawn uniform in +-1/sqrt(fan_in); the modulation output
    layers start at exactly zero.
    """

    arrays: Dict[str, Matrix]
    groups: Dict[str, str] = field(default_factory=dict)

    @classmethod
    def init(cls, config: TrainerConfig, rng: np.random.Generator) -> "ModelParams":
        arrays: Dict[str, Matrix] = {}
        groups: Dict[str, str] = {}
        for layer in layer_specs(config):
            if layer.zero:
                arrays[layer.name] = np.zeros(layer.shape)
            else:
                bound = 1.0 / np.sqrt(layer.fan_in)
                arrays[layer.name] = rng.uniform(-bound, bound, size=layer.shape)
            groups[layer.name] = layer.group
        return cls(arrays=arrays, groups=groups)

    @classmethod
    def from_arrays(cls, arrays: Dict[str, Matrix], config: TrainerConfig) -> "ModelParams":
        """Rebuild from loaded arrays, checking names and shapes against the config."""
        groups = {}
        ordered = {}
        for layer in layer_specs(config):
            if layer.name not in arrays:
                raise ShapeMismatch(f"missing parameter {layer.name}")
            arr = np.asarray(arrays[layer.name], dtype=np.float64)
            if arr.shape != layer.shape:
                raise ShapeMismatch(f"{layer.name}: expected {layer.shape}, got {arr.shape}")
            ordered[layer.name] = arr.copy()
            groups[layer.name] = layer.group
        return cls(arrays=ordered, groups=groups)

    def __getitem__(self, name: str) -> Matrix:
        return self.arrays[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self.arrays)

    def names(self, group: Optional[str] = None) -> List[str]:
        return [n for n in self.arrays if group is None or self.groups[n] == group]

    def copy(self) -> "ModelParams":
        """Deep copy, safe to hand to another thread or process."""
        return ModelParams(arrays={k: v.copy() for k, v in self.arrays.items()}, groups=dict(self.groups))

    def n_values(self) -> int:
        return int(sum(v.size for v in self.arrays.values()))
