"""
Assemblage du Molecular CT : featurisation → RME → interactions empilées → noeuds finaux.

Trois familles d'interactions :
- `niu` : NIU empilées, arrêt adaptatif (n_iterations = plafond d'entraînement)
- `ea`  : blocs EA à nombre d'itérations fixe (liés : 1×T, empilés : T×1)
- `cfc` : blocs de convolution à filtre continu (référence)
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from autodiff import Tensor
from config import ModelConfig
from datasets import remap_species
from ego_attention import CfcParams, EaParams, cfc_block, ea_block
from featurize import EdgeFeatures, EmbeddingTables, FeaturizerConfig, MolecularGraph, featurize
from niu import NiuParams, niu_forward
from parameter_store import ParameterStore
from readout import ReadoutParams, Standardizer
from rme import RmeStack, rme_forward


@dataclass
class InteractionUnit:
    """Opérateur d'interaction et nombre d'applications (plafond pour une NIU)."""
    kind: str
    label: str
    params: Union[NiuParams, EaParams, CfcParams]
    repeats: int = 1


@dataclass
class MolCtModel:
    config: ModelConfig
    store: ParameterStore
    featurizer: FeaturizerConfig
    tables: EmbeddingTables
    rme: RmeStack
    interactions: List[InteractionUnit]
    readout: ReadoutParams
    standardizer: Standardizer = field(default_factory=Standardizer)
    species_map: Optional[Dict[str, int]] = None

    def parameter_count(self, prefix: Optional[str] = None) -> int:
        return self.store.count(prefix)

    @property
    def ponder_weight(self) -> float:
        """Poids du coût de pondération porté par les NIU (0 sans NIU)."""
        weights = [unit.params.ponder_cost_weight for unit in self.interactions if unit.kind == "niu"]
        return max(weights, default=0.0)


@dataclass
class ForwardResult:
    n_out: Tensor
    z: Tensor
    n_rme: Tensor
    features: EdgeFeatures
    steps: List[np.ndarray]
    ponder_cost: Tensor
    mean_steps: float
    attention: List[Tuple[str, int, np.ndarray]] = field(default_factory=list)


def build_model(config: ModelConfig, seed: int = 0) -> MolCtModel:
    """
    Crée tous les paramètres dans un ordre fixe (déterministe pour une seed donnée).

    Noms : `embed.*`, `rme.<b>.*`, `niu.<u>.*` / `ea.<u>.*` / `cfc.<u>.*`, `readout.*`.
    """
    config.validate()
    store = ParameterStore(seed)
    featurizer = FeaturizerConfig.from_model_config(config)
    tables = EmbeddingTables.create(store, featurizer, "embed")
    rme = RmeStack.create(store, "rme", config.n_rme_blocks, config.dim_node, config.dim_edge, config.n_heads,
                         config.ffn_width)

    interactions: List[InteractionUnit] = []
    for unit in range(config.n_interactions):
        label = f"{config.interaction}.{unit}"
        if config.interaction == "niu":
            params = NiuParams.create(
                store, label, config.dim_node, config.dim_edge, config.n_heads, config.ponder_width,
                t_max_train=config.n_iterations, halt_epsilon=config.halt_epsilon,
                ponder_cost_weight=config.ponder_weight, use_ffn=config.use_ffn, ffn_hidden=config.ffn_width,
            )
        elif config.interaction == "ea":
            params = EaParams.create(store, label, config.dim_node, config.dim_edge, config.n_heads,
                                     use_ffn=config.use_ffn, ffn_hidden=config.ffn_width)
        else:
            params = CfcParams.create(store, label, config.dim_node, config.dim_edge, config.filter_width,
                                      ffn_hidden=config.ffn_width)
        interactions.append(InteractionUnit(config.interaction, label, params, config.n_iterations))

    readout = ReadoutParams.create(store, "readout", config.dim_node, config.dim_edge,
                                   config.edge_readout_dim, config.graph_readout_dim)
    return MolCtModel(config, store, featurizer, tables, rme, interactions, readout)


def molct_forward(graph: MolecularGraph, model: MolCtModel, t_max: Optional[int] = None,
                  coords: Optional[Tensor] = None, return_weights: bool = False) -> ForwardResult:
    """
    Passe avant complète jusqu'aux états finaux n^(T).

    Args:
        graph: Système moléculaire
        model: Modèle assemblé
        t_max: Plafond d'itérations des NIU (None → plafond d'entraînement)
        coords: Coordonnées différentiables (None → constantes)
        return_weights: Collecter les cartes d'attention (label, pas, N×N)

    Returns:
        ForwardResult: états finaux + diagnostics (t_i par interaction, coût de pondération)
    """
    if model.species_map is not None:
        graph = remap_species(graph, model.species_map)
    features, z = featurize(graph, model.featurizer, model.tables, coords)
    n_rme = rme_forward(z, features, model.rme)

    state = n_rme
    steps: List[np.ndarray] = []
    attention: List[Tuple[str, int, np.ndarray]] = []
    ponder_cost = Tensor(0.0)
    mean_steps = 0.0
    count = graph.n_particles
    for unit in model.interactions:
        if unit.kind == "niu":
            result = niu_forward(state, features, unit.params, t_max=t_max, return_weights=return_weights)
            state = result.n_out
            steps.append(result.steps.copy())
            ponder_cost = ponder_cost + result.ponder_cost
            mean_steps += result.mean_steps
            attention.extend((unit.label, t + 1, alpha) for t, alpha in enumerate(result.attention))
            continue
        for t in range(unit.repeats):
            if unit.kind == "ea":
                if return_weights:
                    state, alpha = ea_block(state, features, unit.params, use_ffn=model.config.use_ffn,
                                            return_weights=True)
                    attention.append((unit.label, t + 1, alpha))
                else:
                    state = ea_block(state, features, unit.params, use_ffn=model.config.use_ffn)
            else:
                state = cfc_block(state, features, unit.params)
        steps.append(np.full(count, unit.repeats, dtype=np.int64))
        mean_steps += unit.repeats

    return ForwardResult(
        n_out=state,
        z=z,
        n_rme=n_rme,
        features=features,
        steps=steps,
        ponder_cost=ponder_cost,
        mean_steps=mean_steps,
        attention=attention,
    )
