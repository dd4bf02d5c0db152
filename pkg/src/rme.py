"""
Encodeur moléculaire relationnel (RME).

Transforme les embeddings z_i, indépendants des relations, en vecteurs n_i
qui tiennent compte des contraintes relationnelles (liaisons, séquence).
Aucune information géométrique n'intervient.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

import autodiff as ad
from attention import AttnMaskSpec, FfnParams, MhaParams, mha, position_wise_ffn
from autodiff import Tensor
from featurize import EdgeFeatures


@dataclass
class RmeBlockParams:
    """MHA + projections relationnelles d→D + FFN + deux normalisations."""
    mha: MhaParams
    w_k2: Tensor
    w_v2: Tensor
    ffn: FfnParams
    norm1_gain: Tensor
    norm1_bias: Tensor
    norm2_gain: Tensor
    norm2_bias: Tensor

    @classmethod
    def create(cls, store, prefix: str, dim_node: int, dim_edge: int, n_heads: int,
               ffn_hidden: Optional[int] = None) -> "RmeBlockParams":
        return cls(
            mha=MhaParams.create(store, f"{prefix}.mha", dim_node, n_heads),
            w_k2=store.xavier(f"{prefix}.w_k2", dim_edge, dim_node),
            w_v2=store.xavier(f"{prefix}.w_v2", dim_edge, dim_node),
            ffn=FfnParams.create(store, f"{prefix}.ffn", dim_node, ffn_hidden),
            norm1_gain=store.ones(f"{prefix}.norm1.gain", 1, dim_node),
            norm1_bias=store.zeros(f"{prefix}.norm1.bias", 1, dim_node),
            norm2_gain=store.ones(f"{prefix}.norm2.gain", 1, dim_node),
            norm2_bias=store.zeros(f"{prefix}.norm2.bias", 1, dim_node),
        )


@dataclass
class RmeStack:
    """Blocs RME successifs ; une pile vide est l'identité (modèle aveugle aux relations)."""
    blocks: List[RmeBlockParams] = field(default_factory=list)

    @classmethod
    def create(cls, store, prefix: str, n_blocks: int, dim_node: int, dim_edge: int, n_heads: int,
               ffn_hidden: Optional[int] = None) -> "RmeStack":
        return cls([
            RmeBlockParams.create(store, f"{prefix}.{b}", dim_node, dim_edge, n_heads, ffn_hidden)
            for b in range(n_blocks)
        ])

    def __len__(self) -> int:
        return len(self.blocks)


def rme_mask(features: EdgeFeatures) -> AttnMaskSpec:
    """Voisins relationnels + soi-même ; sans aucune relation, tous les noeuds."""
    n = features.n_particles
    if not features.has_relations:
        return AttnMaskSpec.full(n, n)
    return AttnMaskSpec(features.neighbor_mask | np.eye(n, dtype=bool))


def rme_keys_values(z: Tensor, features: EdgeFeatures, params: RmeBlockParams,
                    i: Optional[int] = None) -> Tuple[Tensor, Tensor]:
    """
    k_ji = z_j + v_ij·W^(K2) et v_ji = z_j + v_ij·W^(V2) (terme relationnel nul sans arête).

    Args:
        i: Noeud de référence ; None → blocs de tous les noeuds (N²×D, ligne i*N + j)

    Returns:
        Tuple[Tensor, Tensor]: (clés, valeurs)
    """
    n = features.n_particles
    neighbors = ad.index_rows(z, np.tile(np.arange(n), n))
    if features.relational is None:
        keys = values = neighbors
    else:
        keys = neighbors + features.relational @ params.w_k2
        values = neighbors + features.relational @ params.w_v2
    if i is not None:
        rows = np.arange(i * n, (i + 1) * n)
        return ad.index_rows(keys, rows), ad.index_rows(values, rows)
    return keys, values


def rme_block(z: Tensor, features: EdgeFeatures, params: RmeBlockParams) -> Tensor:
    """n = LN(z + MHA(z, K, V)) puis LN(n + FFN(n)), avec le masque de voisinage."""
    keys, values = rme_keys_values(z, features, params)
    attended = mha(z, keys, values, params.mha, rme_mask(features))
    h = ad.layer_norm(z + attended, params.norm1_gain, params.norm1_bias)
    return ad.layer_norm(h + position_wise_ffn(h, params.ffn), params.norm2_gain, params.norm2_bias)


def rme_forward(z: Tensor, features: EdgeFeatures, stack: RmeStack) -> Tensor:
    n = z
    for block in stack.blocks:
        n = rme_block(n, features, block)
    return n
