"""
Attention par produit scalaire, attention multi-têtes et FFN position par position.

Disposition des clés : chaque requête b possède son propre bloc de M clés
(lignes b*M .. b*M + M − 1), ce qui couvre à la fois le cas classique
(clés partagées, répétées) et les clés dépendantes de la requête du RME
et de l'Ego-Attention.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

import autodiff as ad
from autodiff import Tensor
from constants import MASK_LOGIT
from errors import ContractError, DimensionError


@dataclass
class AttnMaskSpec:
    """Lignes de clés autorisées (B×M) et poids de décroissance optionnels (B×M, dans [0,1])."""
    allowed: np.ndarray
    decay: Optional[Tensor] = None

    def __post_init__(self):
        self.allowed = np.asarray(self.allowed, dtype=bool)
        if self.allowed.ndim == 1:
            self.allowed = self.allowed[None, :]
        if not np.all(self.allowed.any(axis=1)):
            raise ContractError("AttnMaskSpec : une requête n'a aucune clé autorisée")
        if self.decay is not None:
            if self.decay.shape != self.allowed.shape:
                raise DimensionError("AttnMaskSpec", self.allowed.shape, self.decay.shape)
            if not np.all(self.live.any(axis=1)):
                raise ContractError("AttnMaskSpec : une requête n'a aucune clé de poids non nul")

    @classmethod
    def full(cls, n_queries: int, n_keys: int, decay: Optional[Tensor] = None) -> "AttnMaskSpec":
        return cls(np.ones((n_queries, n_keys), dtype=bool), decay)

    @property
    def live(self) -> np.ndarray:
        """Clés autorisées dont le poids de décroissance est non nul."""
        if self.decay is None:
            return self.allowed
        return self.allowed & (self.decay.data > 0.0)

    @property
    def bias(self) -> np.ndarray:
        return np.where(self.live, 0.0, MASK_LOGIT)


def dot_attention(q: Tensor, k: Tensor, v: Tensor, mask: AttnMaskSpec,
                  scale: Optional[float] = None) -> Tuple[Tensor, Tensor]:
    """
    α_ij = w_ij·exp(s_ij) / Σ_k w_ik·exp(s_ik), s = q·kᵀ / √w, w = poids de décroissance (1 par défaut).

    Les clés de poids nul sortent du dénominateur : une particule au-delà de la
    coupure n'influence pas la sortie, et α reste continu quand w → 0.

    Args:
        q: Requêtes B×w
        k: Clés (B·M)×w, bloc de M lignes par requête
        v: Valeurs (B·M)×w'
        mask: Masque B×M
        scale: Facteur des logits (défaut 1/√w)

    Returns:
        Tuple[Tensor, Tensor]: (sortie B×w', α B×M)

    Raises:
        DimensionError: Si les formes ne concordent pas
    """
    n_queries, width = q.shape
    n_keys = mask.allowed.shape[1]
    if mask.allowed.shape[0] != n_queries:
        raise DimensionError("dot_attention", q.shape, mask.allowed.shape)
    if k.shape != (n_queries * n_keys, width):
        raise DimensionError("dot_attention", q.shape, k.shape)
    if v.shape[0] != n_queries * n_keys:
        raise DimensionError("dot_attention", k.shape, v.shape)
    if scale is None:
        scale = 1.0 / np.sqrt(width)

    owner = np.repeat(np.arange(n_queries), n_keys)
    scores = (ad.index_rows(q, owner) * k).sum(axis=1) * scale
    logits = ad.reshape(scores, n_queries, n_keys) + Tensor(mask.bias)
    alpha = ad.softmax_rows(logits)
    if mask.decay is not None:
        damped = alpha * mask.decay
        alpha = damped / damped.sum(axis=1)
    weighted = v * ad.reshape(alpha, n_queries * n_keys, 1)
    return ad.scatter_rows(weighted, owner, n_queries), alpha


@dataclass
class MhaParams:
    """Projections W^(Q), W^(K), W^(V) (D×D, découpées en k têtes de D/k colonnes) et W^(O)."""
    wq: Tensor
    wk: Tensor
    wv: Tensor
    wo: Tensor
    n_heads: int

    @classmethod
    def create(cls, store, prefix: str, dim: int, n_heads: int) -> "MhaParams":
        if n_heads < 1 or dim % n_heads != 0:
            raise ContractError(f"MHA : D={dim} non divisible par k={n_heads}")
        return cls(
            wq=store.xavier(f"{prefix}.wq", dim, dim),
            wk=store.xavier(f"{prefix}.wk", dim, dim),
            wv=store.xavier(f"{prefix}.wv", dim, dim),
            wo=store.xavier(f"{prefix}.wo", dim, dim),
            n_heads=n_heads,
        )

    @property
    def head_width(self) -> int:
        return self.wq.shape[1] // self.n_heads


def mha(q: Tensor, k: Tensor, v: Tensor, params: MhaParams, mask: AttnMaskSpec,
        return_weights: bool = False):
    """
    Attention multi-têtes : concaténation des k têtes puis projection W^(O).

    Les logits de chaque tête sont divisés par √(D/k).

    Returns:
        Tensor B×D, ou (Tensor, α moyen sur les têtes B×M numpy) si `return_weights`
    """
    dim = q.shape[1]
    if dim % params.n_heads != 0:
        raise ContractError(f"MHA : D={dim} non divisible par k={params.n_heads}")
    width = params.head_width
    queries, keys, values = q @ params.wq, k @ params.wk, v @ params.wv
    heads = []
    weights = []
    for h in range(params.n_heads):
        start, stop = h * width, (h + 1) * width
        out, alpha = dot_attention(
            ad.slice_cols(queries, start, stop),
            ad.slice_cols(keys, start, stop),
            ad.slice_cols(values, start, stop),
            mask,
        )
        heads.append(out)
        weights.append(alpha.data)
    merged = heads[0] if len(heads) == 1 else ad.concat(heads, axis=1)
    out = merged @ params.wo
    if return_weights:
        return out, np.mean(weights, axis=0)
    return out


@dataclass
class FfnParams:
    """Couche cachée unique D → D_ff → D partagée par tous les noeuds."""
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor

    @classmethod
    def create(cls, store, prefix: str, dim: int, hidden: Optional[int] = None,
               out_dim: Optional[int] = None) -> "FfnParams":
        hidden = hidden or 2 * dim
        out_dim = out_dim or dim
        return cls(
            w1=store.xavier(f"{prefix}.w1", dim, hidden),
            b1=store.zeros(f"{prefix}.b1", 1, hidden),
            w2=store.xavier(f"{prefix}.w2", hidden, out_dim),
            b2=store.zeros(f"{prefix}.b2", 1, out_dim),
        )


def shifted_softplus(x: Tensor) -> Tensor:
    """ssp(x) = ln(1 + eˣ) − ln 2 (lisse, nulle en 0)."""
    return ad.softplus(x) - np.log(2.0)


def position_wise_ffn(x: Tensor, params: FfnParams) -> Tensor:
    """ssp(x·W1 + b1)·W2 + b2 appliqué ligne par ligne."""
    return shifted_softplus(x @ params.w1 + params.b1) @ params.w2 + params.b2
