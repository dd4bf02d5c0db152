"""
Ego-Attention (EA) : opérateur géométrique à N corps.

Chaque noeud i, pris comme référence, plonge tous les noeuds dans son propre
repère relatif (ñ_j|i = n_j ⊙ P_ji, avec P_ji = e_ij·W^(P) + b^(P)), puis
y applique une attention multi-têtes pré-normalisée. Les coefficients sont
atténués par la coupure cosinus f_c(r_ij) ; la ligne propre (j = i) ne l'est jamais.

Contient aussi le bloc de convolution à filtre continu (CFC) servant de référence.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

import autodiff as ad
from attention import AttnMaskSpec, FfnParams, MhaParams, mha, position_wise_ffn, shifted_softplus
from autodiff import Tensor
from errors import ContractError
from featurize import EdgeFeatures


@dataclass
class EaParams:
    """W^(P), b^(P), vecteur propre e_ii partagé, MHA, normalisations et FFN optionnel."""
    w_p: Tensor
    b_p: Tensor
    self_edge: Tensor
    mha: MhaParams
    norm_gain: Tensor
    norm_bias: Tensor
    ffn: Optional[FfnParams] = None
    ffn_norm_gain: Optional[Tensor] = None
    ffn_norm_bias: Optional[Tensor] = None

    @classmethod
    def create(cls, store, prefix: str, dim_node: int, dim_edge: int, n_heads: int,
               use_ffn: bool = False, ffn_hidden: Optional[int] = None) -> "EaParams":
        params = cls(
            w_p=store.xavier(f"{prefix}.w_p", dim_edge, dim_node),
            b_p=store.zeros(f"{prefix}.b_p", 1, dim_node),
            self_edge=store.normal(f"{prefix}.self_edge", 1, dim_edge),
            mha=MhaParams.create(store, f"{prefix}.mha", dim_node, n_heads),
            norm_gain=store.ones(f"{prefix}.norm.gain", 1, dim_node),
            norm_bias=store.zeros(f"{prefix}.norm.bias", 1, dim_node),
        )
        if use_ffn:
            params.ffn = FfnParams.create(store, f"{prefix}.ffn", dim_node, ffn_hidden)
            params.ffn_norm_gain = store.ones(f"{prefix}.ffn_norm.gain", 1, dim_node)
            params.ffn_norm_bias = store.zeros(f"{prefix}.ffn_norm.bias", 1, dim_node)
        return params


def positional_embed(features: EdgeFeatures, params: EaParams, i: Optional[int] = None) -> Tensor:
    """
    P_ji = e_ij·W^(P) + b^(P), la ligne diagonale utilisant le vecteur propre appris.

    Returns:
        Tensor: N²×D (ligne i*N + j), ou N×D pour le noeud de référence `i`
    """
    edges = ad.where(features.diag_rows, params.self_edge, features.positional)
    if i is not None:
        n = features.n_particles
        edges = ad.index_rows(edges, np.arange(i * n, (i + 1) * n))
    return edges @ params.w_p + params.b_p


def _ego_attend(n: Tensor, features: EdgeFeatures, params: EaParams, return_weights: bool = False):
    """Incréments MHA de tous les noeuds (N×D), lecture synchrone de `n`."""
    count = features.n_particles
    neighbors = ad.index_rows(n, np.tile(np.arange(count), count))
    relative = neighbors * positional_embed(features, params)
    normed = ad.layer_norm(relative, params.norm_gain, params.norm_bias)
    queries = ad.index_rows(normed, np.flatnonzero(features.diag_rows))
    decay = ad.reshape(features.cutoff, count, count)
    mask = AttnMaskSpec.full(count, count, decay)
    return mha(queries, normed, normed, params.mha, mask, return_weights=return_weights)


def ego_attention_update(n: Tensor, features: EdgeFeatures, params: EaParams, i: int) -> Tensor:
    """n_i + MHA(LN(ñ_i|i), LN(ñ_·|i), LN(ñ_·|i)) pour le seul noeud i (1×D)."""
    count = features.n_particles
    neighbors = ad.index_rows(n, np.arange(count))
    relative = neighbors * positional_embed(features, params, i)
    normed = ad.layer_norm(relative, params.norm_gain, params.norm_bias)
    query = ad.index_rows(normed, [i])
    decay = ad.reshape(ad.index_rows(features.cutoff, np.arange(i * count, (i + 1) * count)), 1, count)
    increment = mha(query, normed, normed, params.mha, AttnMaskSpec.full(1, count, decay))
    return ad.index_rows(n, [i]) + increment


def ea_block(n: Tensor, features: EdgeFeatures, params: EaParams, use_ffn: bool = False,
             return_weights: bool = False):
    """
    Mise à jour EA synchrone de tous les noeuds, puis FFN résiduel pré-normalisé optionnel.

    Returns:
        Tensor N×D, ou (Tensor, α N×N moyenné sur les têtes) si `return_weights`

    Raises:
        ContractError: FFN demandé alors que les paramètres n'en ont pas
    """
    if use_ffn and params.ffn is None:
        raise ContractError("ea_block : use_ffn demandé sans paramètres FFN")
    if return_weights:
        increment, alpha = _ego_attend(n, features, params, return_weights=True)
    else:
        increment, alpha = _ego_attend(n, features, params), None
    out = n + increment
    if use_ffn:
        out = out + position_wise_ffn(ad.layer_norm(out, params.ffn_norm_gain, params.ffn_norm_bias), params.ffn)
    return (out, alpha) if return_weights else out


# =============================================================================
# BLOC CFC (référence de type SchNet)
# =============================================================================

@dataclass
class CfcParams:
    """Projection d'entrée D→F, réseau de filtres d→F→F, sortie F→D et FFN de raffinement."""
    w_in: Tensor
    filter_w1: Tensor
    filter_b1: Tensor
    filter_w2: Tensor
    filter_b2: Tensor
    w_out: Tensor
    b_out: Tensor
    ffn: FfnParams

    @classmethod
    def create(cls, store, prefix: str, dim_node: int, dim_edge: int, filters: Optional[int] = None,
               ffn_hidden: Optional[int] = None) -> "CfcParams":
        filters = filters or dim_node
        return cls(
            w_in=store.xavier(f"{prefix}.w_in", dim_node, filters),
            filter_w1=store.xavier(f"{prefix}.filter.w1", dim_edge, filters),
            filter_b1=store.zeros(f"{prefix}.filter.b1", 1, filters),
            filter_w2=store.xavier(f"{prefix}.filter.w2", filters, filters),
            filter_b2=store.zeros(f"{prefix}.filter.b2", 1, filters),
            w_out=store.xavier(f"{prefix}.w_out", filters, dim_node),
            b_out=store.zeros(f"{prefix}.b_out", 1, dim_node),
            ffn=FfnParams.create(store, f"{prefix}.ffn", dim_node, ffn_hidden),
        )


def cfc_filters(features: EdgeFeatures, params: CfcParams) -> Tensor:
    """Filtres W(e_ij) (N²×F)."""
    hidden = shifted_softplus(features.positional @ params.filter_w1 + params.filter_b1)
    return hidden @ params.filter_w2 + params.filter_b2


def cfc_block(n: Tensor, features: EdgeFeatures, params: CfcParams) -> Tensor:
    """n_i ← n_i + (Σ_{j≠i} (n_j·W_in) ⊙ W(e_ij) · f_c(r_ij))·W_out + b_out, puis n ← n + FFN(n)."""
    count = features.n_particles
    weights = ad.where(features.diag_rows, 0.0, features.cutoff)
    projected = ad.index_rows(n @ params.w_in, np.tile(np.arange(count), count))
    messages = projected * cfc_filters(features, params) * weights
    aggregated = ad.scatter_rows(messages, np.repeat(np.arange(count), count), count)
    out = n + aggregated @ params.w_out + params.b_out
    return out + position_wise_ffn(out, params.ffn)
