"""
Registre des paramètres entraînables (matrices, biais, tables d'embedding).

Initialisation : Xavier-uniforme pour les projections, zéros pour les biais,
loi normale (écart-type 0.1) pour les tables d'embedding.
"""

from collections import OrderedDict
from typing import Dict, Iterator, List, Mapping, Optional, Tuple

import numpy as np

from autodiff import Tensor
from errors import ContractError, DimensionError


class ParameterStore:
    """Paramètres nommés (`rme.0.mha.wq`, `niu.1.ponder.w2`...) créés de façon déterministe."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self._params: "OrderedDict[str, Tensor]" = OrderedDict()

    # ------------------------------------------------------------------
    # Création
    # ------------------------------------------------------------------
    def add(self, name: str, data: np.ndarray) -> Tensor:
        if name in self._params:
            raise ContractError(f"Paramètre déjà enregistré : {name}")
        tensor = Tensor(data, requires_grad=True, name=name)
        self._params[name] = tensor
        return tensor

    def xavier(self, name: str, fan_in: int, fan_out: int) -> Tensor:
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return self.add(name, self.rng.uniform(-limit, limit, size=(fan_in, fan_out)))

    def zeros(self, name: str, rows: int, cols: int) -> Tensor:
        return self.add(name, np.zeros((rows, cols)))

    def ones(self, name: str, rows: int, cols: int) -> Tensor:
        return self.add(name, np.ones((rows, cols)))

    def normal(self, name: str, rows: int, cols: int, std: float = 0.1) -> Tensor:
        return self.add(name, self.rng.normal(0.0, std, size=(rows, cols)))

    # ------------------------------------------------------------------
    # Accès
    # ------------------------------------------------------------------
    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def names(self) -> List[str]:
        return list(self._params)

    def items(self) -> List[Tuple[str, Tensor]]:
        return list(self._params.items())

    def tensors(self) -> List[Tensor]:
        return list(self._params.values())

    def count(self, prefix: Optional[str] = None) -> int:
        """Nombre de scalaires entraînables (éventuellement restreint à un préfixe)."""
        return int(sum(
            t.data.size for name, t in self._params.items()
            if prefix is None or name == prefix or name.startswith(prefix + ".")
        ))

    def group_counts(self, depth: int = 1) -> Dict[str, int]:
        """Comptes agrégés par préfixe de `depth` segments (`rme`, `niu.0`...)."""
        counts: Dict[str, int] = OrderedDict()
        for name, tensor in self._params.items():
            group = ".".join(name.split(".")[:depth])
            counts[group] = counts.get(group, 0) + int(tensor.data.size)
        return counts

    # ------------------------------------------------------------------
    # Export / import
    # ------------------------------------------------------------------
    def snapshot(self) -> Dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self._params.items()}

    def load_arrays(self, arrays: Mapping[str, np.ndarray]) -> None:
        """
        Remplace les valeurs de tous les paramètres.

        Raises:
            ContractError: Si un paramètre manque ou est inconnu
            DimensionError: Si une forme diffère
        """
        missing = [name for name in self._params if name not in arrays]
        extra = [name for name in arrays if name not in self._params]
        if missing or extra:
            raise ContractError(f"Paramètres incompatibles (manquants={missing}, inconnus={extra})")
        for name, tensor in self._params.items():
            value = np.asarray(arrays[name], dtype=np.float64)
            if value.shape != tensor.shape:
                raise DimensionError(f"load[{name}]", tensor.shape, value.shape)
            tensor.data[...] = value
