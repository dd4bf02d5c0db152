"""
Lectures au niveau des noeuds, des arêtes et du graphe, et perte d'apprentissage.

- Noeuds : énergie atomique E_i = f^(N)(n_i), énergie totale ΣE_i et forces
  F_i = −∇_{x_i} ΣE_j calculées exactement par le moteur de différentiation.
- Arêtes : lecture symétrique en (i, j).
- Graphe : moyenne des noeuds puis MLP.

Les énergies et forces du modèle sont en unités standardisées ; `Standardizer`
assure la conversion vers les unités du jeu de données.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

import autodiff as ad
from attention import shifted_softplus
from autodiff import Tensor
from errors import ContractError, DimensionError


@dataclass
class MlpParams:
    """Couches affines successives, softplus décalée entre elles."""
    weights: List[Tensor]
    biases: List[Tensor]

    @classmethod
    def create(cls, store, prefix: str, sizes: Sequence[int]) -> "MlpParams":
        weights, biases = [], []
        for layer, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            weights.append(store.xavier(f"{prefix}.{layer}.w", fan_in, fan_out))
            biases.append(store.zeros(f"{prefix}.{layer}.b", 1, fan_out))
        return cls(weights, biases)


def mlp(x: Tensor, params: MlpParams) -> Tensor:
    last = len(params.weights) - 1
    for layer, (w, b) in enumerate(zip(params.weights, params.biases)):
        x = x @ w + b
        if layer < last:
            x = shifted_softplus(x)
    return x


@dataclass
class ReadoutParams:
    """f^(N) : D → D/2 → 1 ; f^(E) et f^(G) optionnels."""
    node: MlpParams
    edge: Optional[MlpParams] = None
    graph: Optional[MlpParams] = None

    @classmethod
    def create(cls, store, prefix: str, dim_node: int, dim_edge: int, edge_dim: int = 0,
               graph_dim: int = 0) -> "ReadoutParams":
        params = cls(node=MlpParams.create(store, f"{prefix}.node", [dim_node, max(1, dim_node // 2), 1]))
        if edge_dim > 0:
            params.edge = MlpParams.create(store, f"{prefix}.edge", [2 * dim_node + 2 * dim_edge, dim_node, edge_dim])
        if graph_dim > 0:
            params.graph = MlpParams.create(store, f"{prefix}.graph", [dim_node, dim_node, graph_dim])
        return params


@dataclass
class Standardizer:
    """Étiquettes standardisées : (E − moyenne) / s et F / s, s = RMS des forces."""
    energy_mean: float = 0.0
    force_scale: float = 1.0

    @classmethod
    def fit(cls, samples) -> "Standardizer":
        if not samples:
            return cls()
        energies = np.array([s.energy for s in samples], dtype=np.float64)
        forces = np.concatenate([np.asarray(s.forces, dtype=np.float64).reshape(-1) for s in samples])
        rms = float(np.sqrt(np.mean(forces ** 2))) if forces.size else 0.0
        return cls(energy_mean=float(energies.mean()), force_scale=rms if rms > 0 else 1.0)

    def energy_to_model(self, energy: float) -> float:
        return (energy - self.energy_mean) / self.force_scale

    def forces_to_model(self, forces: np.ndarray) -> np.ndarray:
        return np.asarray(forces, dtype=np.float64) / self.force_scale

    def energy_to_physical(self, energy: float) -> float:
        return energy * self.force_scale + self.energy_mean

    def forces_to_physical(self, forces: np.ndarray) -> np.ndarray:
        return np.asarray(forces, dtype=np.float64) * self.force_scale

    def to_dict(self) -> Dict[str, float]:
        return {"energy_mean": self.energy_mean, "force_scale": self.force_scale}


@dataclass
class EnergyForcePrediction:
    """Prédiction en unités du modèle (standardisées)."""
    total_energy: Tensor
    per_atom_energy: Tensor
    forces: Tensor
    ponder_cost: Tensor
    mean_steps: float = 0.0
    steps: List[np.ndarray] = field(default_factory=list)
    attention: List[Tuple[str, int, np.ndarray]] = field(default_factory=list)
    nodes: Optional[Tensor] = None

    def physical(self, standardizer: Standardizer) -> Tuple[float, np.ndarray, np.ndarray]:
        """(E totale, E atomiques, forces N×3) dans les unités du jeu de données."""
        n = self.per_atom_energy.shape[0]
        per_atom = self.per_atom_energy.data[:, 0] * standardizer.force_scale + standardizer.energy_mean / n
        return (
            standardizer.energy_to_physical(self.total_energy.item()),
            per_atom,
            standardizer.forces_to_physical(self.forces.data),
        )


def predict_energy_forces(graph, model, create_graph: bool = False, t_max: Optional[int] = None,
                          return_weights: bool = False) -> EnergyForcePrediction:
    """
    Énergies atomiques et forces exactes −∇_x ΣE_i.

    Args:
        graph: Système moléculaire
        model: MolCtModel assemblé
        create_graph: Enregistrer le calcul des forces (perte sur les forces)
        t_max: Plafond d'itérations des NIU en inférence
        return_weights: Conserver les cartes d'attention
    """
    from molct import molct_forward

    coords = Tensor(graph.coords, requires_grad=True, name="coords")
    with ad.enable_grad():
        encoded = molct_forward(graph, model, t_max=t_max, coords=coords, return_weights=return_weights)
        per_atom = mlp(encoded.n_out, model.readout.node)
        total = per_atom.sum()
        (gradient,) = ad.grad(total, [coords], create_graph=create_graph)
        forces = -gradient
    return EnergyForcePrediction(
        total_energy=total,
        per_atom_energy=per_atom,
        forces=forces,
        ponder_cost=encoded.ponder_cost,
        mean_steps=encoded.mean_steps,
        steps=encoded.steps,
        attention=encoded.attention,
        nodes=encoded.n_out,
    )


def loss(pred: EnergyForcePrediction, energy_label: float, force_labels: np.ndarray, lam: float,
         ponder_weight: float = 0.0, return_terms: bool = False):
    """
    (1 − λ)(E₀ − ΣE_i)² + λ Σ_i |F_i,0 − F_i|² (+ poids × coût de pondération).

    Les étiquettes sont attendues en unités du modèle.

    Raises:
        ContractError: λ hors de [0, 1] ou étiquettes de forme incorrecte
    """
    if not 0.0 <= lam <= 1.0:
        raise ContractError(f"loss : λ doit être dans [0, 1] (reçu {lam})")
    force_labels = np.asarray(force_labels, dtype=np.float64)
    if force_labels.shape != pred.forces.shape:
        raise ContractError(f"loss : forces de forme {force_labels.shape}, attendu {pred.forces.shape}")
    energy_error = pred.total_energy - float(energy_label)
    force_error = pred.forces - Tensor(force_labels)
    energy_term = energy_error * energy_error
    force_term = (force_error * force_error).sum()
    total = energy_term * (1.0 - lam) + force_term * lam
    ponder_term = pred.ponder_cost * ponder_weight
    if ponder_weight > 0:
        total = total + ponder_term
    if return_terms:
        return total, {
            "energy": energy_term.item(),
            "force": force_term.item(),
            "ponder": ponder_term.item(),
        }
    return total


def edge_readout(n_i: Tensor, n_j: Tensor, v_ij: Optional[Tensor], e_ij: Tensor, params: ReadoutParams,
                 v_ji: Optional[Tensor] = None) -> Tensor:
    """
    f^(E)([n_i + n_j, |n_i − n_j|, (v_ij + v_ji)/2, e_ij]) ; invariant à l'échange de i et j.

    Raises:
        ContractError: Si la lecture d'arête n'est pas configurée
    """
    if params.edge is None:
        raise ContractError("edge_readout : tête d'arête non configurée (edge_readout_dim = 0)")
    width = e_ij.shape[1]
    if v_ij is None and v_ji is None:
        relation = Tensor(np.zeros((1, width)))
    elif v_ij is None or v_ji is None:
        relation = v_ij if v_ij is not None else v_ji
    else:
        relation = (v_ij + v_ji) * 0.5
    if relation.shape != e_ij.shape:
        raise DimensionError("edge_readout", relation.shape, e_ij.shape)
    features = ad.concat([n_i + n_j, ad.tabs(n_i - n_j), relation, e_ij], axis=1)
    return mlp(features, params.edge)


def graph_readout(n: Tensor, params: ReadoutParams) -> Tensor:
    """g = f^(G)(moyenne des n_i).

    Raises:
        ContractError: Si la lecture de graphe n'est pas configurée ou N = 0
    """
    if params.graph is None:
        raise ContractError("graph_readout : tête de graphe non configurée (graph_readout_dim = 0)")
    if n.shape[0] < 1:
        raise ContractError("graph_readout : au moins un noeud requis")
    return mlp(ad.mean(n, axis=0), params.graph)
