"""
Jeux de données : extended-XYZ, fichiers de liaisons, oracle de mécanique
moléculaire jouet et découpage train/validation.

Formats texte :
- extended-XYZ : nombre d'atomes ; ligne de propriétés contenant `energy=<float>` ;
  puis N lignes `<symbole> x y z fx fy fz`.
- liaisons : lignes `i j type_id` (indices à partir de 0), commentaires `#`.
- champ de force : lignes `clé = valeurs` (`bond = i j k_b r0`,
  `angle = i j k k_a theta0_degrés`, `lj = i j epsilon sigma`, `charge = i q`,
  `exclude = i j`), commentaires `#`.
"""

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np

from constants import ELEMENT_SYMBOLS, LOG_EMOJIS, LOG_MESSAGES, SYMBOL_TO_NUMBER
from errors import ConfigError, ContractError, DegeneracyError, ParseError, VocabularyError
from featurize import MolecularGraph, RelationalEdge, pairwise_distances

ENERGY_PATTERN = re.compile(r"(?:^|\s)energy=(\S+)", re.IGNORECASE)


@dataclass
class LabeledSample:
    """Configuration + énergie de référence + forces de référence (N×3)."""
    graph: MolecularGraph
    energy: float
    forces: np.ndarray
    sample_id: int = 0

    def __post_init__(self):
        self.forces = np.asarray(self.forces, dtype=np.float64).reshape(-1, 3)
        self.energy = float(self.energy)

    def validate(self) -> "LabeledSample":
        if self.forces.shape != (self.graph.n_particles, 3):
            raise ContractError(
                f"Échantillon {self.sample_id} : forces {self.forces.shape} pour N={self.graph.n_particles}"
            )
        if not (np.isfinite(self.energy) and np.all(np.isfinite(self.forces))):
            raise ContractError(f"Échantillon {self.sample_id} : étiquettes non finies")
        return self


# =============================================================================
# EXTENDED-XYZ
# =============================================================================

def _parse_float(token: str, path, line_number: int, what: str) -> float:
    try:
        value = float(token)
    except ValueError:
        raise ParseError(path, line_number, f"{what} illisible : '{token}'")
    if not np.isfinite(value):
        raise ParseError(path, line_number, f"{what} non fini : '{token}'")
    return value


def parse_extxyz(path, edges: Optional[List[RelationalEdge]] = None) -> List[LabeledSample]:
    """
    Lit toutes les trames d'un fichier extended-XYZ.

    Args:
        path: Chemin du fichier
        edges: Arêtes relationnelles communes à toutes les trames (optionnel)

    Returns:
        List[LabeledSample]: Une entrée par trame

    Raises:
        ParseError: Fichier mal formé (chemin + numéro de ligne)
        VocabularyError: Symbole d'élément inconnu
    """
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise ParseError(path, 0, f"lecture impossible ({e})")

    samples: List[LabeledSample] = []
    cursor = 0
    while cursor < len(lines):
        if not lines[cursor].strip():
            cursor += 1
            continue
        header_line = cursor + 1
        try:
            count = int(lines[cursor].strip())
        except ValueError:
            raise ParseError(path, header_line, f"nombre d'atomes attendu, reçu '{lines[cursor].strip()}'")
        if count < 1:
            raise ParseError(path, header_line, f"nombre d'atomes invalide ({count})")
        if cursor + 1 >= len(lines):
            raise ParseError(path, header_line + 1, "ligne de propriétés manquante")
        match = ENERGY_PATTERN.search(lines[cursor + 1])
        if match is None:
            raise ParseError(path, header_line + 1, "champ 'energy=<float>' absent")
        energy = _parse_float(match.group(1), path, header_line + 1, "énergie")

        species = np.zeros(count, dtype=np.int64)
        coords = np.zeros((count, 3))
        forces = np.zeros((count, 3))
        for atom in range(count):
            line_index = cursor + 2 + atom
            line_number = line_index + 1
            if line_index >= len(lines) or not lines[line_index].strip():
                raise ParseError(path, line_number, f"{count} atomes annoncés, {atom} trouvés")
            fields = lines[line_index].split()
            if len(fields) != 7:
                raise ParseError(path, line_number, f"7 champs attendus (symbole x y z fx fy fz), reçu {len(fields)}")
            symbol = fields[0]
            if symbol not in SYMBOL_TO_NUMBER:
                raise VocabularyError(f"{path}:{line_number} : élément inconnu '{symbol}'")
            species[atom] = SYMBOL_TO_NUMBER[symbol]
            values = [_parse_float(tok, path, line_number, "coordonnée/force") for tok in fields[1:]]
            coords[atom] = values[:3]
            forces[atom] = values[3:]
        graph = MolecularGraph(species, coords, list(edges or []))
        samples.append(LabeledSample(graph, energy, forces, sample_id=len(samples)))
        cursor += 2 + count
    return samples


def write_extxyz(path, samples: Sequence[LabeledSample]) -> None:
    """Écrit les échantillons (flottants en 17 chiffres significatifs, relecture exacte)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for sample in samples:
            graph = sample.graph
            f.write(f"{graph.n_particles}\n")
            f.write(f"Properties=species:S:1:pos:R:3:forces:R:3 energy={sample.energy:.17g}\n")
            for number, xyz, force in zip(graph.species, graph.coords, sample.forces):
                if not 0 < number < len(ELEMENT_SYMBOLS):
                    raise VocabularyError(f"Numéro atomique sans symbole : {number}")
                values = " ".join(f"{v:.17g}" for v in (*xyz, *force))
                f.write(f"{ELEMENT_SYMBOLS[number]} {values}\n")


# =============================================================================
# FICHIERS DE LIAISONS
# =============================================================================

def parse_bonds(path, n_particles: Optional[int] = None) -> List[RelationalEdge]:
    """
    Lit un fichier `i j type_id` (non orienté).

    Raises:
        ParseError: Ligne mal formée, indice hors bornes, arête (i, i) ou doublon
    """
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise ParseError(path, 0, f"lecture impossible ({e})")
    edges: List[RelationalEdge] = []
    seen: Set[Tuple[int, int]] = set()
    for line_number, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 3:
            raise ParseError(path, line_number, f"3 champs attendus (i j type_id), reçu {len(fields)}")
        try:
            i, j, relation_type = (int(tok) for tok in fields)
        except ValueError:
            raise ParseError(path, line_number, f"entiers attendus : '{line}'")
        if i < 0 or j < 0 or relation_type < 0:
            raise ParseError(path, line_number, "indices et type doivent être ≥ 0")
        if n_particles is not None and (i >= n_particles or j >= n_particles):
            raise ParseError(path, line_number, f"indice hors bornes pour N={n_particles}")
        if i == j:
            raise ParseError(path, line_number, f"liaison ({i}, {i}) interdite")
        key = (min(i, j), max(i, j))
        if key in seen:
            raise ParseError(path, line_number, f"liaison {key} en double")
        seen.add(key)
        edges.append(RelationalEdge(i, j, relation_type))
    return edges


def write_bonds(path, edges: Sequence[RelationalEdge]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write("# i j type_id\n")
        for edge in edges:
            f.write(f"{edge.i} {edge.j} {edge.relation_type}\n")


def load_dataset(xyz_path, bonds_path=None, logger=None) -> List[LabeledSample]:
    """Charge un extended-XYZ et, si fourni, la topologie commune de liaisons."""
    edges = None
    if bonds_path is not None:
        edges = parse_bonds(bonds_path)
    samples = parse_extxyz(xyz_path, edges)
    if edges:
        n = samples[0].graph.n_particles if samples else 0
        for edge in edges:
            if edge.i >= n or edge.j >= n:
                raise ParseError(bonds_path, 0, f"liaison ({edge.i}, {edge.j}) hors bornes pour N={n}")
    if logger:
        logger.info(f"{LOG_EMOJIS['data']} " + LOG_MESSAGES["dataset_loaded"].format(count=len(samples), path=xyz_path))
    return samples


# =============================================================================
# ORACLE DE MÉCANIQUE MOLÉCULAIRE JOUET
# =============================================================================

@dataclass
class ToyForceField:
    """Liaisons et angles harmoniques, Lennard-Jones par paire, Coulomb q_i q_j / r."""
    bonds: List[Tuple[int, int, float, float]] = field(default_factory=list)
    angles: List[Tuple[int, int, int, float, float]] = field(default_factory=list)
    lj: List[Tuple[int, int, float, float]] = field(default_factory=list)
    charges: Dict[int, float] = field(default_factory=dict)
    exclusions: Set[Tuple[int, int]] = field(default_factory=set)

    def validate(self, n_particles: Optional[int] = None) -> "ToyForceField":
        """
        Raises:
            ConfigError: Constante négative, longueur nulle ou indice hors bornes
        """
        for i, j, k_b, r0 in self.bonds:
            if k_b < 0 or r0 <= 0:
                raise ConfigError(f"Liaison ({i}, {j}) : k_b ≥ 0 et r0 > 0 requis")
        for i, j, k, k_a, _ in self.angles:
            if k_a < 0:
                raise ConfigError(f"Angle ({i}, {j}, {k}) : k_a ≥ 0 requis")
        for i, j, epsilon, sigma in self.lj:
            if epsilon < 0 or sigma <= 0:
                raise ConfigError(f"LJ ({i}, {j}) : epsilon ≥ 0 et sigma > 0 requis")
        if n_particles is not None:
            indices = [idx for term in self.bonds for idx in term[:2]]
            indices += [idx for term in self.angles for idx in term[:3]]
            indices += [idx for term in self.lj for idx in term[:2]]
            indices += list(self.charges)
            bad = [idx for idx in indices if not 0 <= idx < n_particles]
            if bad:
                raise ConfigError(f"Champ de force : indice {bad[0]} hors bornes pour N={n_particles}")
        return self

    def bonded_exclusions(self) -> Set[Tuple[int, int]]:
        """Paires 1-2 et 1-3 (via les liaisons) + exclusions explicites."""
        neighbors: Dict[int, Set[int]] = {}
        for i, j, _, _ in self.bonds:
            neighbors.setdefault(i, set()).add(j)
            neighbors.setdefault(j, set()).add(i)
        excluded = {(min(i, j), max(i, j)) for i, j in self.exclusions}
        for center, linked in neighbors.items():
            for a in linked:
                excluded.add((min(center, a), max(center, a)))
                for b in linked:
                    if a < b:
                        excluded.add((a, b))
        return excluded

    def swapped(self, a: int, b: int) -> "ToyForceField":
        """Même champ avec les rôles liés (liaisons, angles) des particules a et b échangés."""
        def swap(idx):
            return b if idx == a else a if idx == b else idx

        return ToyForceField(
            bonds=[(swap(i), swap(j), k_b, r0) for i, j, k_b, r0 in self.bonds],
            angles=[(swap(i), swap(j), swap(k), k_a, t0) for i, j, k, k_a, t0 in self.angles],
            lj=list(self.lj),
            charges=dict(self.charges),
            exclusions={(swap(i), swap(j)) for i, j in self.exclusions},
        )


def build_nonbonded(ff: ToyForceField, n_particles: int) -> List[Tuple[int, int, float, float, float]]:
    """Paires non liées (i < j, hors exclusions) : (i, j, epsilon, sigma, q_i q_j)."""
    excluded = ff.bonded_exclusions()
    lj = {(min(i, j), max(i, j)): (eps, sig) for i, j, eps, sig in ff.lj}
    pairs = []
    for i in range(n_particles):
        for j in range(i + 1, n_particles):
            if (i, j) in excluded:
                continue
            epsilon, sigma = lj.get((i, j), (0.0, 1.0))
            qq = ff.charges.get(i, 0.0) * ff.charges.get(j, 0.0)
            if epsilon == 0.0 and qq == 0.0:
                continue
            pairs.append((i, j, epsilon, sigma, qq))
    return pairs


def _distance(coords: np.ndarray, i: int, j: int) -> Tuple[float, np.ndarray]:
    delta = coords[i] - coords[j]
    r = float(np.sqrt(delta @ delta))
    if r == 0.0:
        raise DegeneracyError(f"Particules {i} et {j} confondues (r = 0)")
    return r, delta


def toy_mm_energy_forces(graph: MolecularGraph, ff: ToyForceField) -> Tuple[float, np.ndarray]:
    """
    Énergie du champ jouet et forces analytiques exactes (−∇E).

    E = Σ k_b(r − r0)² + Σ k_a(θ − θ0)² + Σ 4ε[(σ/r)¹² − (σ/r)⁶] + Σ q_i q_j / r

    Raises:
        DegeneracyError: Distance nulle ou angle dégénéré (θ = 0 ou π)
    """
    coords = graph.coords
    n = graph.n_particles
    energy = 0.0
    forces = np.zeros((n, 3))

    for i, j, k_b, r0 in ff.bonds:
        r, delta = _distance(coords, i, j)
        energy += k_b * (r - r0) ** 2
        g = 2.0 * k_b * (r - r0) * delta / r
        forces[i] -= g
        forces[j] += g

    for i, j, k, k_a, theta0 in ff.angles:
        ru, u = _distance(coords, i, j)
        rw, w = _distance(coords, k, j)
        cos_theta = float(np.clip(u @ w / (ru * rw), -1.0, 1.0))
        sin_theta = np.sqrt(1.0 - cos_theta ** 2)
        if sin_theta < 1e-10:
            raise DegeneracyError(f"Angle ({i}, {j}, {k}) dégénéré (particules alignées)")
        theta = np.arccos(cos_theta)
        energy += k_a * (theta - theta0) ** 2
        factor = 2.0 * k_a * (theta - theta0) * (-1.0 / sin_theta)
        d_cos_du = w / (ru * rw) - cos_theta * u / ru ** 2
        d_cos_dw = u / (ru * rw) - cos_theta * w / rw ** 2
        grad_i = factor * d_cos_du
        grad_k = factor * d_cos_dw
        forces[i] -= grad_i
        forces[k] -= grad_k
        forces[j] += grad_i + grad_k

    for i, j, epsilon, sigma, qq in build_nonbonded(ff, n):
        r, delta = _distance(coords, i, j)
        s6 = (sigma / r) ** 6
        energy += 4.0 * epsilon * (s6 * s6 - s6) + qq / r
        d_energy_dr = 4.0 * epsilon * (-12.0 * s6 * s6 + 6.0 * s6) / r - qq / r ** 2
        g = d_energy_dr * delta / r
        forces[i] -= g
        forces[j] += g

    return float(energy), forces


def parse_force_field(path) -> ToyForceField:
    """
    Lit un champ de force jouet (angles en degrés dans le fichier).

    Raises:
        ParseError: Clé inconnue ou valeurs mal formées
    """
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise ParseError(path, 0, f"lecture impossible ({e})")
    arity = {"bond": 4, "angle": 5, "lj": 4, "charge": 2, "exclude": 2}
    ff = ToyForceField()
    for line_number, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(path, line_number, "format 'clé = valeurs' attendu")
        key, values = (part.strip() for part in line.split("=", 1))
        key = key.lower()
        if key not in arity:
            raise ParseError(path, line_number, f"clé inconnue '{key}' (valides : {', '.join(arity)})")
        tokens = values.split()
        if len(tokens) != arity[key]:
            raise ParseError(path, line_number, f"'{key}' attend {arity[key]} valeurs, reçu {len(tokens)}")
        try:
            if key == "bond":
                ff.bonds.append((int(tokens[0]), int(tokens[1]), float(tokens[2]), float(tokens[3])))
            elif key == "angle":
                ff.angles.append((int(tokens[0]), int(tokens[1]), int(tokens[2]),
                                  float(tokens[3]), np.deg2rad(float(tokens[4]))))
            elif key == "lj":
                ff.lj.append((int(tokens[0]), int(tokens[1]), float(tokens[2]), float(tokens[3])))
            elif key == "charge":
                ff.charges[int(tokens[0])] = float(tokens[1])
            else:
                ff.exclusions.add((int(tokens[0]), int(tokens[1])))
        except ValueError:
            raise ParseError(path, line_number, f"valeurs illisibles : '{values}'")
    return ff


def write_force_field(path, ff: ToyForceField) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write("# Champ de force jouet (angles en degrés)\n")
        for i, j, k_b, r0 in ff.bonds:
            f.write(f"bond = {i} {j} {k_b:.17g} {r0:.17g}\n")
        for i, j, k, k_a, theta0 in ff.angles:
            f.write(f"angle = {i} {j} {k} {k_a:.17g} {np.rad2deg(theta0):.17g}\n")
        for i, j, epsilon, sigma in ff.lj:
            f.write(f"lj = {i} {j} {epsilon:.17g} {sigma:.17g}\n")
        for i, q in sorted(ff.charges.items()):
            f.write(f"charge = {i} {q:.17g}\n")
        for i, j in sorted(ff.exclusions):
            f.write(f"exclude = {i} {j}\n")


# =============================================================================
# GABARITS ET GÉNÉRATION
# =============================================================================

def toy_mm_template() -> Tuple[MolecularGraph, ToyForceField]:
    """
    Méthyle (C0, H1–H3) et carbonyle (C4=O5) séparés d'environ 3 Å.

    Les deux carbones ont le même numéro atomique mais des environnements
    de liaison différents : un modèle aveugle aux relations ne peut pas
    les distinguer.
    """
    ch = 1.09
    directions = np.array([
        [-1.0 / 3.0, 2.0 * np.sqrt(2.0) / 3.0, 0.0],
        [-1.0 / 3.0, -np.sqrt(2.0) / 3.0, np.sqrt(6.0) / 3.0],
        [-1.0 / 3.0, -np.sqrt(2.0) / 3.0, -np.sqrt(6.0) / 3.0],
    ])
    carbonyl = np.array([3.0, 0.0, 0.0])
    coords = np.vstack([
        np.zeros(3),
        ch * directions,
        carbonyl,
        carbonyl + 1.23 * np.array([0.5, np.sqrt(3.0) / 2.0, 0.0]),
    ])
    species = np.array([6, 1, 1, 1, 6, 8])
    single, double = 0, 1
    edges = [
        RelationalEdge(0, 1, single),
        RelationalEdge(0, 2, single),
        RelationalEdge(0, 3, single),
        RelationalEdge(4, 5, double),
    ]
    tetrahedral = np.deg2rad(109.47)
    ff = ToyForceField(
        bonds=[(0, 1, 300.0, ch), (0, 2, 300.0, ch), (0, 3, 300.0, ch), (4, 5, 500.0, 1.23)],
        angles=[(1, 0, 2, 35.0, tetrahedral), (1, 0, 3, 35.0, tetrahedral), (2, 0, 3, 35.0, tetrahedral)],
        lj=[(0, 4, 0.1, 3.4), (0, 5, 0.1, 3.1), (1, 4, 0.03, 2.9), (2, 4, 0.03, 2.9), (3, 4, 0.03, 2.9),
            (1, 5, 0.03, 2.7), (2, 5, 0.03, 2.7), (3, 5, 0.03, 2.7)],
        charges={0: -0.3, 1: 0.1, 2: 0.1, 3: 0.1, 4: 0.5, 5: -0.5},
    )
    return MolecularGraph(species, coords, edges), ff


def toy_mm_variants() -> List[Tuple[MolecularGraph, ToyForceField]]:
    """
    Deux topologies sur la même géométrie et les mêmes espèces.

    - carbonyle C4=O5 (liaison de type 1, r0 = 1.23 Å) ;
    - C4–O5 simple (type 0, r0 = 1.43 Å, constante plus faible).

    Un modèle aveugle aux relations reçoit alors des entrées identiques
    pour des étiquettes différentes.
    """
    template, ff = toy_mm_template()
    edges = [e for e in template.relational_edges if {e.i, e.j} != {4, 5}]
    single = MolecularGraph(template.species.copy(), template.coords.copy(), edges + [RelationalEdge(4, 5, 0)])
    single_ff = ToyForceField(
        bonds=[b for b in ff.bonds if {b[0], b[1]} != {4, 5}] + [(4, 5, 300.0, 1.43)],
        angles=list(ff.angles),
        lj=list(ff.lj),
        charges=dict(ff.charges),
        exclusions=set(ff.exclusions),
    )
    return [(template, ff), (single, single_ff)]


def diatomic_template(r0: float = 1.0, k_b: float = 1.0, species: Tuple[int, int] = (1, 1),
                      separation: Optional[float] = None) -> Tuple[MolecularGraph, ToyForceField]:
    """Diatomique harmonique (liaison de type 0), sans terme non lié."""
    separation = r0 if separation is None else separation
    coords = np.array([[0.0, 0.0, 0.0], [separation, 0.0, 0.0]])
    graph = MolecularGraph(np.array(species), coords, [RelationalEdge(0, 1, 0)])
    return graph, ToyForceField(bonds=[(0, 1, k_b, r0)])


@dataclass
class RelationalWitness:
    """Deux topologies sur les mêmes espèces et coordonnées, énergies différentes."""
    atom_a: int
    atom_b: int
    energy_original: float
    energy_swapped: float


def certify_relational_witness(template: MolecularGraph, ff: ToyForceField) -> Optional[RelationalWitness]:
    """
    Cherche deux atomes de même espèce à environnements de liaison distincts
    dont l'échange des rôles liés change l'énergie de l'oracle.
    """
    signatures = artificial_atom_types(template)
    base_energy, _ = toy_mm_energy_forces(template, ff)
    n = template.n_particles
    for a in range(n):
        for b in range(a + 1, n):
            if template.species[a] != template.species[b] or signatures[a] == signatures[b]:
                continue
            swapped_energy, _ = toy_mm_energy_forces(template, ff.swapped(a, b))
            if abs(swapped_energy - base_energy) > 1e-9:
                return RelationalWitness(a, b, base_energy, swapped_energy)
    return None


def topology_energies(template: MolecularGraph, ff: ToyForceField,
                      alternatives: Sequence[Tuple[MolecularGraph, ToyForceField]]) -> List[float]:
    """
    Énergies de l'oracle sur la géométrie du gabarit pour chaque topologie.

    Raises:
        ConfigError: Topologie alternative de géométrie ou d'espèces différentes
    """
    energies = [toy_mm_energy_forces(template, ff)[0]]
    for index, (graph, alt_ff) in enumerate(alternatives, start=1):
        if (graph.n_particles != template.n_particles
                or not np.array_equal(graph.species, template.species)
                or not np.allclose(graph.coords, template.coords)):
            raise ConfigError(f"Topologie {index} : espèces ou géométrie différentes du gabarit")
        graph.validate()
        alt_ff.validate(graph.n_particles)
        energies.append(toy_mm_energy_forces(graph, alt_ff)[0])
    return energies


def gen_toy_mm_dataset(template: MolecularGraph, ff: ToyForceField, n_samples: int = 2048,
                       noise: float = 0.05, seed: int = 0, r_min: float = 0.5,
                       require_witness: bool = False, logger=None,
                       alternatives: Sequence[Tuple[MolecularGraph, ToyForceField]] = ()) -> List[LabeledSample]:
    """
    Perturbations gaussiennes du gabarit, rejet si une distance < r_min, étiquettes de l'oracle.

    Avec `alternatives`, chaque échantillon tire uniformément sa topologie parmi
    le gabarit et les topologies alternatives (mêmes espèces, même géométrie).

    Raises:
        ConfigError: Taux de rejet > 99 %, topologies incompatibles ou témoin
            relationnel introuvable si exigé
    """
    template.validate()
    ff.validate(template.n_particles)
    topologies = [(template, ff)] + list(alternatives)
    if alternatives:
        energies = topology_energies(template, ff, alternatives)
        if require_witness and max(energies) - min(energies) <= 1e-9:
            raise ConfigError("Les topologies alternatives ne changent pas l'énergie de l'oracle")
        if logger:
            logger.debug(f"{LOG_EMOJIS['target']} Topologies sur la géométrie du gabarit : "
                         + ", ".join(f"E={e:.6g}" for e in energies))
    if n_samples < 1:
        raise ConfigError("gen_toy_mm_dataset : n_samples ≥ 1 requis")
    if noise < 0:
        raise ConfigError("gen_toy_mm_dataset : bruit ≥ 0 requis")
    if require_witness:
        witness = certify_relational_witness(template, ff)
        if witness is None:
            raise ConfigError("Aucun témoin relationnel : le gabarit ne distingue pas deux atomes de même espèce")
        if logger:
            logger.debug(
                f"{LOG_EMOJIS['target']} Témoin relationnel : atomes {witness.atom_a}/{witness.atom_b} "
                f"E={witness.energy_original:.6g} vs E_échangé={witness.energy_swapped:.6g}"
            )

    rng = np.random.default_rng(seed)
    n = template.n_particles
    off_diagonal = ~np.eye(n, dtype=bool)
    samples: List[LabeledSample] = []
    attempts = 0
    max_attempts = 100 * n_samples
    while len(samples) < n_samples:
        if attempts >= max_attempts:
            raise ConfigError(
                f"Taux de rejet > 99 % ({attempts} tirages pour {len(samples)} acceptés) : réduire le bruit"
            )
        attempts += 1
        coords = template.coords + rng.normal(0.0, noise, size=template.coords.shape)
        if n > 1 and pairwise_distances(coords)[off_diagonal].min() < r_min:
            continue
        topology, topology_ff = topologies[int(rng.integers(len(topologies)))] if alternatives else topologies[0]
        graph = topology.with_coords(coords)
        energy, forces = toy_mm_energy_forces(graph, topology_ff)
        samples.append(LabeledSample(graph, energy, forces, sample_id=len(samples)))

    if logger:
        logger.info(f"{LOG_EMOJIS['data']} " + LOG_MESSAGES["dataset_generated"].format(
            count=len(samples), seed=seed, noise=noise))
    return samples


def split(dataset: Sequence[LabeledSample], n_train: int, n_val: int,
          seed: int = 0) -> Tuple[List[LabeledSample], List[LabeledSample]]:
    """
    Mélange déterministe puis découpage en deux sous-ensembles disjoints.

    Raises:
        ConfigError: Pas assez d'échantillons
    """
    if n_train < 0 or n_val < 0:
        raise ConfigError("split : tailles négatives")
    if n_train + n_val > len(dataset):
        raise ConfigError(f"split : {n_train} + {n_val} échantillons demandés, {len(dataset)} disponibles")
    order = np.random.default_rng(seed).permutation(len(dataset))
    train = [dataset[int(i)] for i in order[:n_train]]
    val = [dataset[int(i)] for i in order[n_train:n_train + n_val]]
    return train, val


# =============================================================================
# TYPES ATOMIQUES ARTIFICIELS
# =============================================================================

def artificial_atom_types(graph: MolecularGraph) -> List[str]:
    """
    Signature par atome : espèce + multiset trié des (espèce voisine, type de liaison).

    Exemple : "6|1:0,1:0,1:0" pour un carbone lié à trois hydrogènes par des liaisons simples.
    """
    neighbors: Dict[int, List[Tuple[int, int]]] = {i: [] for i in range(graph.n_particles)}
    for edge in graph.relational_edges:
        neighbors[edge.i].append((int(graph.species[edge.j]), edge.relation_type))
        if not edge.directed:
            neighbors[edge.j].append((int(graph.species[edge.i]), edge.relation_type))
    return [
        f"{int(graph.species[i])}|" + ",".join(f"{s}:{t}" for s, t in sorted(neighbors[i]))
        for i in range(graph.n_particles)
    ]


def build_species_map(samples: Sequence[LabeledSample]) -> Dict[str, int]:
    """Identifiants artificiels 0..K−1 attribués dans l'ordre trié des signatures."""
    signatures = set()
    for sample in samples:
        signatures.update(artificial_atom_types(sample.graph))
    return {signature: index for index, signature in enumerate(sorted(signatures))}


def remap_species(graph: MolecularGraph, species_map: Dict[str, int]) -> MolecularGraph:
    """
    Remplace chaque espèce par son type artificiel.

    Raises:
        VocabularyError: Signature absente de la table apprise
    """
    signatures = artificial_atom_types(graph)
    unknown = [s for s in signatures if s not in species_map]
    if unknown:
        raise VocabularyError(f"Type atomique artificiel inconnu : '{unknown[0]}'")
    species = np.array([species_map[s] for s in signatures], dtype=np.int64)
    return MolecularGraph(species, graph.coords, list(graph.relational_edges))
