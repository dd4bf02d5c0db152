"""
Featurisation en double représentation d'un système moléculaire.

- Noeuds : embeddings z_i issus d'une table indexée par l'espèce.
- Arêtes relationnelles v_ij : embeddings des types de contrainte (liaisons, séquence).
- Arêtes positionnelles e_ij : expansion RBF gaussienne de log r_ij (ou de r_ij).
- Poids de coupure cosinus f_c(r_ij) utilisés comme décroissance de l'attention.

Les tenseurs d'arêtes sont stockés à plat : la paire (i, j) occupe la ligne i*N + j.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

import autodiff as ad
from autodiff import Tensor
from errors import ContractError, DegeneracyError, DimensionError, DomainError, VocabularyError

RBF_MODES = ("log", "linear")


@dataclass(frozen=True)
class RelationalEdge:
    """Contrainte relationnelle (i, j, type) ; non orientée par défaut."""
    i: int
    j: int
    relation_type: int
    directed: bool = False


@dataclass
class MolecularGraph:
    """Espèces, coordonnées (Å) et arêtes relationnelles d'un système."""
    species: np.ndarray
    coords: np.ndarray
    relational_edges: List[RelationalEdge] = field(default_factory=list)

    def __post_init__(self):
        self.species = np.asarray(self.species, dtype=np.int64).reshape(-1)
        self.coords = np.asarray(self.coords, dtype=np.float64).reshape(-1, 3)
        self.relational_edges = list(self.relational_edges)

    @property
    def n_particles(self) -> int:
        return int(self.species.shape[0])

    def validate(self, relation_vocab_size: Optional[int] = None) -> "MolecularGraph":
        """
        Vérifie les invariants structurels du graphe.

        Raises:
            ContractError: Graphe vide, formes incohérentes, arête (i, i) ou hors bornes
            VocabularyError: Type de relation inconnu
        """
        n = self.n_particles
        if n < 1:
            raise ContractError("MolecularGraph : au moins une particule est requise")
        if self.coords.shape != (n, 3):
            raise DimensionError("MolecularGraph", self.coords.shape, (n, 3))
        if not np.all(np.isfinite(self.coords)):
            raise ContractError("MolecularGraph : coordonnées non finies")
        for edge in self.relational_edges:
            if edge.i == edge.j:
                raise ContractError(f"MolecularGraph : arête relationnelle ({edge.i}, {edge.i}) interdite")
            if not (0 <= edge.i < n and 0 <= edge.j < n):
                raise ContractError(f"MolecularGraph : arête ({edge.i}, {edge.j}) hors bornes pour N={n}")
            if relation_vocab_size is not None and not 0 <= edge.relation_type < relation_vocab_size:
                raise VocabularyError(
                    f"Type de relation inconnu {edge.relation_type} (vocabulaire de taille {relation_vocab_size})"
                )
        return self

    def with_coords(self, coords: np.ndarray) -> "MolecularGraph":
        return MolecularGraph(self.species.copy(), np.array(coords, dtype=np.float64), list(self.relational_edges))

    def permuted(self, order) -> "MolecularGraph":
        """Réétiquette les particules : la nouvelle particule k est l'ancienne order[k]."""
        order = np.asarray(order, dtype=np.int64)
        new_index = np.empty_like(order)
        new_index[order] = np.arange(order.shape[0])
        edges = [
            RelationalEdge(int(new_index[e.i]), int(new_index[e.j]), e.relation_type, e.directed)
            for e in self.relational_edges
        ]
        return MolecularGraph(self.species[order], self.coords[order], edges)


@dataclass
class FeaturizerConfig:
    """Paramètres de l'expansion RBF et tailles des vocabulaires."""
    d: int = 32
    r_min: float = 0.5
    r_cut: float = 10.0
    sigma: Optional[float] = None
    D: int = 32
    relation_vocab_size: int = 4
    species_vocab_size: int = 10
    rbf: str = "log"

    def __post_init__(self):
        if self.d < 2:
            raise ContractError(f"FeaturizerConfig : d ≥ 2 requis (reçu {self.d})")
        if not 0.0 < self.r_min < self.r_cut:
            raise ContractError(f"FeaturizerConfig : il faut 0 < r_min < r_cut ({self.r_min}, {self.r_cut})")
        if self.sigma is not None and self.sigma <= 0:
            raise ContractError("FeaturizerConfig : sigma > 0 requis")
        if self.rbf not in RBF_MODES:
            raise ContractError(f"FeaturizerConfig : rbf inconnu '{self.rbf}'")

    @classmethod
    def from_model_config(cls, model_config) -> "FeaturizerConfig":
        return cls(
            d=model_config.dim_edge,
            r_min=model_config.r_min,
            r_cut=model_config.r_cut,
            sigma=model_config.sigma,
            D=model_config.dim_node,
            relation_vocab_size=model_config.relation_vocab_size,
            species_vocab_size=model_config.species_vocab_size,
            rbf=model_config.rbf,
        )

    @property
    def centers(self) -> np.ndarray:
        """μ_k : d points régulièrement espacés (en log r ou en r selon le mode)."""
        if self.rbf == "log":
            return np.linspace(np.log(self.r_min), np.log(self.r_cut), self.d)
        return np.linspace(self.r_min, self.r_cut, self.d)

    @property
    def width(self) -> float:
        if self.sigma is not None:
            return float(self.sigma)
        centers = self.centers
        return float(centers[1] - centers[0])


@dataclass
class EmbeddingTables:
    """Tables apprises des espèces (V_s×D) et des types de relation (V_r×d)."""
    species: Tensor
    relations: Tensor

    @classmethod
    def create(cls, store, cfg: FeaturizerConfig, prefix: str = "embed") -> "EmbeddingTables":
        return cls(
            species=store.normal(f"{prefix}.species", cfg.species_vocab_size, cfg.D),
            relations=store.normal(f"{prefix}.relations", cfg.relation_vocab_size, cfg.d),
        )


@dataclass
class EdgeFeatures:
    """Caractéristiques d'arêtes aplaties (ligne i*N + j pour la paire (i, j))."""
    n_particles: int
    positional: Tensor
    distances: Tensor
    cutoff: Tensor
    diag_rows: np.ndarray
    neighbor_mask: np.ndarray
    relation_types: Dict[Tuple[int, int], int]
    relational: Optional[Tensor] = None

    @property
    def has_relations(self) -> bool:
        return bool(self.relation_types)

    def positional_matrix(self) -> np.ndarray:
        """Vue N×N×d des vecteurs positionnels (lignes diagonales comprises)."""
        n = self.n_particles
        return self.positional.data.reshape(n, n, -1)

    def cutoff_matrix(self) -> np.ndarray:
        n = self.n_particles
        return self.cutoff.data.reshape(n, n)

    def distance_matrix(self) -> np.ndarray:
        n = self.n_particles
        r = self.distances.data.reshape(n, n).copy()
        np.fill_diagonal(r, 0.0)
        return r

    def relational_vector(self, i: int, j: int) -> Optional[np.ndarray]:
        """v_ij (1×d) ou None si aucune relation (i, j)."""
        if (i, j) not in self.relation_types or self.relational is None:
            return None
        return self.relational.data[i * self.n_particles + j][None, :].copy()


def reverse_pairs(n: int) -> np.ndarray:
    """Permutation des lignes d'arêtes envoyant (i, j) sur (j, i)."""
    idx = np.arange(n * n)
    return (idx % n) * n + idx // n


def difference_operator(n: int) -> np.ndarray:
    """Matrice constante N²×N telle que (op @ X)[i*N+j] = X_i − X_j."""
    op = np.zeros((n * n, n))
    rows = np.arange(n * n)
    op[rows, rows // n] += 1.0
    op[rows, rows % n] -= 1.0
    return op


# =============================================================================
# EXPANSIONS RADIALES ET COUPURE
# =============================================================================

def log_rbf(r: float, cfg: FeaturizerConfig) -> np.ndarray:
    """
    e_k(r) = exp(−(log r − μ_k)² / 2σ²), μ_k répartis sur [log r_min, log r_cut].

    Raises:
        DomainError: Si r ≤ 0
    """
    if not r > 0:
        raise DomainError(f"log_rbf : distance strictement positive requise (reçu {r})")
    centers = np.linspace(np.log(cfg.r_min), np.log(cfg.r_cut), cfg.d)
    width = cfg.sigma if cfg.sigma is not None else float(centers[1] - centers[0])
    return np.exp(-((np.log(r) - centers) ** 2) / (2.0 * width ** 2))


def linear_rbf(r: float, cfg: FeaturizerConfig) -> np.ndarray:
    """e_k(r) = exp(−(r − μ_k)² / 2σ²), μ_k répartis sur [r_min, r_cut]."""
    if r < 0:
        raise DomainError(f"linear_rbf : distance négative ({r})")
    centers = np.linspace(cfg.r_min, cfg.r_cut, cfg.d)
    width = cfg.sigma if cfg.sigma is not None else float(centers[1] - centers[0])
    return np.exp(-((r - centers) ** 2) / (2.0 * width ** 2))


def expand_distances(r: Tensor, cfg: FeaturizerConfig) -> Tensor:
    """Expansion RBF différentiable d'une colonne de distances (M×1 → M×d)."""
    if np.any(r.data <= 0) and cfg.rbf == "log":
        raise DomainError("expand_distances : distance nulle ou négative en mode log")
    x = ad.log(r) if cfg.rbf == "log" else r
    centers = Tensor(cfg.centers[None, :])
    diff = x - centers
    return ad.exp(diff * diff * (-1.0 / (2.0 * cfg.width ** 2)))


def cutoff_weight(r: float, r_cut: float) -> float:
    """Coupure cosinus 0.5·(cos(π·min(r, r_cut)/r_cut) + 1)."""
    return 0.5 * (np.cos(np.pi * min(r, r_cut) / r_cut) + 1.0)


def cutoff_tensor(r: Tensor, r_cut: float) -> Tensor:
    """Version différentiable de `cutoff_weight` (nulle et à gradient nul au-delà de r_cut)."""
    clipped = ad.clip_max(r, r_cut)
    return (ad.cos(clipped * (np.pi / r_cut)) + 1.0) * 0.5


# =============================================================================
# EMBEDDINGS
# =============================================================================

def embed_nodes(species, table: Tensor) -> Tensor:
    """
    z_i = ligne `species[i]` de la table.

    Raises:
        VocabularyError: Si une espèce dépasse le vocabulaire
    """
    species = np.asarray(species, dtype=np.int64).reshape(-1)
    vocab = table.shape[0]
    bad = species[(species < 0) | (species >= vocab)]
    if bad.size:
        raise VocabularyError(f"Espèce inconnue {int(bad[0])} (vocabulaire de taille {vocab})")
    return ad.index_rows(table, species)


def relation_map(edges: List[RelationalEdge], n: int, relation_vocab_size: int) -> Dict[Tuple[int, int], int]:
    """
    Table (i, j) → type ; une arête non orientée remplit les deux sens.

    Raises:
        VocabularyError: Type de relation inconnu
        ContractError: Paire déclarée deux fois
    """
    types: Dict[Tuple[int, int], int] = {}
    for edge in edges:
        if not 0 <= edge.relation_type < relation_vocab_size:
            raise VocabularyError(
                f"Type de relation inconnu {edge.relation_type} (vocabulaire de taille {relation_vocab_size})"
            )
        pairs = [(edge.i, edge.j)] if edge.directed else [(edge.i, edge.j), (edge.j, edge.i)]
        for pair in pairs:
            if pair in types:
                raise ContractError(f"Relation déclarée deux fois pour la paire {pair}")
            types[pair] = edge.relation_type
    return types


def embed_relations(edges: List[RelationalEdge], table: Tensor,
                    n: int) -> Tuple[Optional[Tensor], Dict[Tuple[int, int], int], np.ndarray]:
    """
    Vecteurs relationnels v_ij (N²×d, lignes nulles sans relation) et masque de voisinage.

    Returns:
        Tuple: (v aplati ou None si aucune relation, table des types, masque N×N)
    """
    types = relation_map(edges, n, table.shape[0])
    mask = np.zeros((n, n), dtype=bool)
    if not types:
        return None, types, mask
    pairs = sorted(types)
    rows = np.array([i * n + j for i, j in pairs], dtype=np.int64)
    ids = np.array([types[p] for p in pairs], dtype=np.int64)
    for i, j in pairs:
        mask[i, j] = True
    relational = ad.scatter_rows(ad.index_rows(table, ids), rows, n * n)
    return relational, types, mask


# =============================================================================
# FEATURISATION COMPLÈTE
# =============================================================================

def pairwise_distances(coords: np.ndarray) -> np.ndarray:
    diff = coords[:, None, :] - coords[None, :, :]
    return np.sqrt((diff ** 2).sum(axis=-1))


def featurize(graph: MolecularGraph, cfg: FeaturizerConfig, tables: Optional[EmbeddingTables] = None,
              coords: Optional[Tensor] = None) -> Tuple[EdgeFeatures, Optional[Tensor]]:
    """
    Construit les caractéristiques d'arêtes et les embeddings initiaux.

    Args:
        graph: Système moléculaire
        cfg: Configuration de l'expansion
        tables: Tables d'embedding (None → pas de z ni de v)
        coords: Coordonnées N×3 à dériver (None → constantes issues du graphe)

    Returns:
        Tuple[EdgeFeatures, Optional[Tensor]]: caractéristiques et z (N×D)

    Raises:
        DegeneracyError: Deux particules à moins de r_min/10
    """
    graph.validate(cfg.relation_vocab_size)
    n = graph.n_particles
    if coords is None:
        coords = Tensor(graph.coords)
    if coords.shape != (n, 3):
        raise DimensionError("featurize", coords.shape, (n, 3))

    r_np = pairwise_distances(coords.data)
    if n > 1:
        off_diag = r_np[~np.eye(n, dtype=bool)]
        closest = float(off_diag.min())
        if closest < cfg.r_min / 10.0:
            raise DegeneracyError(
                f"Particules confondues : distance minimale {closest:.3e} Å < r_min/10 = {cfg.r_min / 10.0:.3e} Å"
            )

    diag_rows = np.eye(n, dtype=bool).reshape(-1)
    diff = Tensor(difference_operator(n)) @ coords
    # r_ii = 1 sur la diagonale : valeur neutre, gradient fini
    squared = (diff * diff).sum(axis=1) + Tensor(diag_rows.astype(np.float64)[:, None])
    distances = ad.sqrt(squared)
    positional = expand_distances(distances, cfg)
    cutoff = ad.where(diag_rows, 1.0, cutoff_tensor(distances, cfg.r_cut))

    if tables is not None:
        z = embed_nodes(graph.species, tables.species)
        relational, types, mask = embed_relations(graph.relational_edges, tables.relations, n)
    else:
        z = None
        relational = None
        types = relation_map(graph.relational_edges, n, cfg.relation_vocab_size)
        mask = np.zeros((n, n), dtype=bool)
        for i, j in types:
            mask[i, j] = True
        bad = graph.species[(graph.species < 0) | (graph.species >= cfg.species_vocab_size)]
        if bad.size:
            raise VocabularyError(f"Espèce inconnue {int(bad[0])} (vocabulaire de taille {cfg.species_vocab_size})")

    features = EdgeFeatures(
        n_particles=n,
        positional=positional,
        distances=distances,
        cutoff=cutoff,
        diag_rows=diag_rows,
        neighbor_mask=mask,
        relation_types=types,
        relational=relational,
    )
    return features, z
