"""
Unité d'interaction neuronale (NIU).

Un bloc EA à paramètres liés est itéré avec un arrêt adaptatif par noeud :
après chaque application, un petit réseau de pondération prédit une
probabilité d'arrêt ; un noeud s'arrête quand la masse cumulée atteint
1 − ε (ou au plafond T_max) et son état est alors simplement recopié.
Les noeuds arrêtés restent visibles comme clés/valeurs pour les autres.
"""

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

import autodiff as ad
from attention import shifted_softplus
from autodiff import Tensor
from ego_attention import EaParams, ea_block
from errors import ContractError
from featurize import EdgeFeatures


@dataclass
class PonderParams:
    """Réseau de pondération D → H → 1 (sortie sigmoïde)."""
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor

    @classmethod
    def create(cls, store, prefix: str, dim_node: int, hidden: int) -> "PonderParams":
        return cls(
            w1=store.xavier(f"{prefix}.w1", dim_node, hidden),
            b1=store.zeros(f"{prefix}.b1", 1, hidden),
            w2=store.xavier(f"{prefix}.w2", hidden, 1),
            b2=store.zeros(f"{prefix}.b2", 1, 1),
        )


@dataclass
class NiuParams:
    """Bloc EA lié sur toutes les itérations + réseau de pondération + réglages ACT."""
    ea: EaParams
    ponder: PonderParams
    t_max_train: int = 3
    halt_epsilon: float = 0.01
    ponder_cost_weight: float = 1e-3
    use_ffn: bool = False

    def __post_init__(self):
        if self.t_max_train < 1:
            raise ContractError(f"NIU : T_max ≥ 1 requis (reçu {self.t_max_train})")
        if not 0.0 < self.halt_epsilon < 0.5:
            raise ContractError(f"NIU : halt_epsilon dans (0, 0.5) requis (reçu {self.halt_epsilon})")
        if self.ponder_cost_weight < 0:
            raise ContractError("NIU : ponder_cost_weight ≥ 0 requis")

    @classmethod
    def create(cls, store, prefix: str, dim_node: int, dim_edge: int, n_heads: int, ponder_hidden: int,
               t_max_train: int = 3, halt_epsilon: float = 0.01, ponder_cost_weight: float = 1e-3,
               use_ffn: bool = False, ffn_hidden: Optional[int] = None) -> "NiuParams":
        return cls(
            ea=EaParams.create(store, f"{prefix}.ea", dim_node, dim_edge, n_heads, use_ffn=use_ffn,
                               ffn_hidden=ffn_hidden),
            ponder=PonderParams.create(store, f"{prefix}.ponder", dim_node, ponder_hidden),
            t_max_train=t_max_train,
            halt_epsilon=halt_epsilon,
            ponder_cost_weight=ponder_cost_weight,
            use_ffn=use_ffn,
        )


@dataclass
class HaltState:
    """Comptabilité ACT par noeud."""
    cumulative: np.ndarray
    halted: np.ndarray
    steps: np.ndarray
    accumulated: Tensor

    @classmethod
    def initial(cls, n_nodes: int) -> "HaltState":
        return cls(
            cumulative=np.zeros(n_nodes),
            halted=np.zeros(n_nodes, dtype=bool),
            steps=np.zeros(n_nodes, dtype=np.int64),
            accumulated=Tensor(np.zeros((n_nodes, 1))),
        )

    @property
    def remainder(self) -> Tensor:
        """R_i = 1 − Σ des probabilités des pas sans arrêt."""
        return 1.0 - self.accumulated


@dataclass
class NiuResult:
    n_out: Tensor
    steps: np.ndarray
    ponder_cost: Tensor
    mean_steps: float
    halt: HaltState
    attention: List[np.ndarray] = field(default_factory=list)
    state_trace: List[np.ndarray] = field(default_factory=list)
    halted_trace: List[np.ndarray] = field(default_factory=list)


def time_embedding(t: int, dim: int) -> Tensor:
    """T^(t) : entrée 2k = sin(ω_k t), entrée 2k+1 = cos(ω_k t), ω_k = 1/10000^(2k/D)."""
    if t < 0:
        raise ContractError(f"time_embedding : t ≥ 0 requis (reçu {t})")
    values = np.zeros(dim)
    k = np.arange((dim + 1) // 2)
    omega = 1.0 / np.power(10000.0, 2.0 * k / dim)
    values[0::2] = np.sin(omega * t)
    values[1::2] = np.cos(omega[: dim // 2] * t)
    return Tensor(values[None, :])


def halting_prob(n: Tensor, t: int, params: PonderParams) -> Tensor:
    """sigmoid(FFN(n ⊕ T^(t))) par ligne (M×1)."""
    x = n + time_embedding(t, n.shape[1])
    hidden = shifted_softplus(x @ params.w1 + params.b1)
    return ad.sigmoid(hidden @ params.w2 + params.b2)


def niu_forward(n: Tensor, features: EdgeFeatures, params: NiuParams, t_max: Optional[int] = None,
                return_weights: bool = False, keep_trace: bool = False) -> NiuResult:
    """
    Itère le bloc EA lié avec arrêt adaptatif par noeud.

    Args:
        n: États initiaux N×D
        features: Caractéristiques d'arêtes
        params: Paramètres de la NIU
        t_max: Plafond d'itérations (None → plafond d'entraînement ; plus grand autorisé en inférence)
        return_weights: Conserver les cartes d'attention de chaque pas
        keep_trace: Conserver les états et masques d'arrêt de chaque pas

    Returns:
        NiuResult: états finaux, pas par noeud t_i, coût de pondération moyen(t_i + R_i)
    """
    t_max = params.t_max_train if t_max is None else t_max
    if t_max < 1:
        raise ContractError(f"niu_forward : T_max ≥ 1 requis (reçu {t_max})")
    count = n.shape[0]
    halt = HaltState.initial(count)
    threshold = 1.0 - params.halt_epsilon
    result = NiuResult(n_out=n, steps=halt.steps, ponder_cost=Tensor(0.0), mean_steps=0.0, halt=halt)

    state = n
    for t in range(1, t_max + 1):
        if return_weights:
            updated, alpha = ea_block(state, features, params.ea, use_ffn=params.use_ffn, return_weights=True)
            result.attention.append(alpha)
        else:
            updated = ea_block(state, features, params.ea, use_ffn=params.use_ffn)
        active = ~halt.halted
        state = ad.where(active, updated, state)
        halt.steps[active] = t

        p = halting_prob(state, t, params.ponder)
        reached = halt.cumulative + p.data[:, 0] >= threshold
        stopping = active & (reached | (t == t_max))
        continuing = active & ~stopping
        halt.accumulated = halt.accumulated + p * Tensor(continuing.astype(np.float64)[:, None])
        halt.cumulative[continuing] += p.data[continuing, 0]
        halt.halted = halt.halted | stopping

        if keep_trace:
            result.state_trace.append(state.data.copy())
            result.halted_trace.append(halt.halted.copy())
        if halt.halted.all():
            break

    steps_column = Tensor(halt.steps.astype(np.float64)[:, None])
    result.n_out = state
    result.steps = halt.steps
    result.ponder_cost = ad.mean(steps_column + halt.remainder)
    result.mean_steps = float(halt.steps.mean())
    return result
