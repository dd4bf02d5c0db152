"""Configuration pytest pour Molecular CT."""

import os
import sys
from pathlib import Path
from unittest.mock import patch

import numpy as np
import pytest

# Ajouter le répertoire src au path pour les imports
src_path = Path(__file__).parent.parent / "src"
sys.path.insert(0, str(src_path))

from config import ModelConfig  # noqa: E402
from featurize import MolecularGraph, RelationalEdge, pairwise_distances  # noqa: E402


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Rotation propre aléatoire (déterminant +1)."""
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def make_graph(rng: np.random.Generator, n_particles: int = 4, with_bonds: bool = True,
               min_distance: float = 1.0, box: float = 1.5, relation_vocab_size: int = 4) -> MolecularGraph:
    """Graphe aléatoire (H, C, N, O) à distances ≥ min_distance, chaîne liée optionnelle."""
    species = rng.choice([1, 6, 7, 8], size=n_particles)
    while True:
        coords = rng.uniform(-box, box, size=(n_particles, 3))
        if n_particles == 1:
            break
        if pairwise_distances(coords)[~np.eye(n_particles, dtype=bool)].min() >= min_distance:
            break
    edges = []
    if with_bonds:
        edges = [
            RelationalEdge(i, i + 1, int(rng.integers(0, relation_vocab_size)))
            for i in range(n_particles - 1)
        ]
    return MolecularGraph(species, coords, edges)


@pytest.fixture
def graph_factory():
    """Fabrique de graphes aléatoires (voir `make_graph`)."""
    return make_graph


@pytest.fixture
def rotation_factory():
    """Fabrique de rotations propres aléatoires."""
    return random_rotation


@pytest.fixture
def rng():
    """Générateur déterministe."""
    return np.random.default_rng(1234)


@pytest.fixture
def small_config():
    """Petit modèle complet : RME + une NIU (T=2) avec FFN."""
    return ModelConfig(
        dim_node=8, dim_edge=8, n_heads=2, n_rme_blocks=1, interaction="niu",
        n_interactions=1, n_iterations=2, use_ffn=True, r_cut=6.0,
    )


@pytest.fixture
def small_graph(rng):
    """Graphe lié de 4 particules."""
    return make_graph(rng, 4)


@pytest.fixture
def clean_env():
    """Environnement sans variables MOLCT_* ni LOG_*."""
    kept = {k: v for k, v in os.environ.items() if not k.startswith(("MOLCT_", "LOG_"))}
    with patch.dict(os.environ, kept, clear=True):
        yield
