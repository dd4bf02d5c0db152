"""Configuration module for Molecular CT."""

import os
import sys
from dataclasses import dataclass, field, fields, asdict
from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml
from dotenv import load_dotenv

from errors import ConfigError

# Charger les variables d'environnement depuis le fichier .env
load_dotenv()

PARAMETERS_PATH = Path(__file__).parent / "parameters.yaml"

VALID_ENV_VARS = {
    "LOG_LEVEL", "LOG_DIR", "LOG_FILE", "LOG_ROTATION", "LOG_RETENTION", "LOG_COMPRESSION",
    "MOLCT_THREADS", "MOLCT_OUTPUT_DIR", "MOLCT_STEPS", "MOLCT_LR", "MOLCT_SEEDS",
}


def safe_float(value):
    try:
        return float(value) if value else None
    except (ValueError, TypeError):
        return None


def safe_int(value):
    try:
        return int(value) if value else None
    except (ValueError, TypeError):
        return None


def get_settings():
    """
    Retourne un dictionnaire avec les paramètres de processus (environnement).
    Valide également les variables MOLCT_* pour détecter les fautes de frappe.

    Returns:
        dict: Dictionnaire contenant les paramètres de configuration
    """
    unknown = sorted(
        var for var in os.environ
        if var.upper().startswith("MOLCT_") and var.upper() not in VALID_ENV_VARS
    )
    for var in unknown:
        print(f"⚠️ Variable d'environnement inconnue ignorée: {var}", file=sys.stderr)
        print(f"💡 Variables valides: {', '.join(sorted(VALID_ENV_VARS))}", file=sys.stderr)

    threads = safe_int(os.getenv("MOLCT_THREADS"))
    return {
        "log_level": os.getenv("LOG_LEVEL", "INFO").upper(),
        "log_dir": os.getenv("LOG_DIR", "logs"),
        "log_file": os.getenv("LOG_FILE", "molct.log"),
        "log_rotation": os.getenv("LOG_ROTATION", "10 MB"),
        "log_retention": os.getenv("LOG_RETENTION", "7 days"),
        "log_compression": os.getenv("LOG_COMPRESSION", "zip"),
        "threads": threads if threads and threads > 0 else 1,
        "output_dir": os.getenv("MOLCT_OUTPUT_DIR") or None,
        "steps": safe_int(os.getenv("MOLCT_STEPS")),
        "lr": safe_float(os.getenv("MOLCT_LR")),
        "seeds": os.getenv("MOLCT_SEEDS") or None,
    }


# =============================================================================
# HYPER-PARAMÈTRES DU MODÈLE ET DU RUN
# =============================================================================

INTERACTION_KINDS = ("niu", "ea", "cfc")
RBF_MODES = ("log", "linear")


@dataclass
class ModelConfig:
    """Hyper-paramètres d'architecture (D, d, têtes, RME, interactions...)."""
    dim_node: int = 32
    dim_edge: int = 32
    n_heads: int = 8
    n_rme_blocks: int = 1
    interaction: str = "niu"  # "niu" | "ea" | "cfc"
    n_interactions: int = 1
    n_iterations: int = 3  # T fixe (ea/cfc) ou plafond d'entraînement (niu)
    use_ffn: bool = False
    ffn_factor: int = 2
    halt_epsilon: float = 0.01
    ponder_weight: float = 0.001
    ponder_hidden: int = 0  # 0 → max(2, D // 8)
    rbf: str = "log"  # "log" | "linear"
    r_min: float = 0.5
    r_cut: float = 10.0
    sigma: Optional[float] = None  # None → espacement des centres
    species_vocab_size: int = 10
    relation_vocab_size: int = 4
    cfc_filters: int = 0  # 0 → D
    edge_readout_dim: int = 0
    graph_readout_dim: int = 0
    artificial_atom_types: bool = False

    def validate(self) -> "ModelConfig":
        """Vérifie la cohérence des hyper-paramètres.

        Raises:
            ConfigError: Si une valeur est invalide
        """
        if self.dim_node < 2 or self.dim_edge < 2:
            raise ConfigError(f"dim_node et dim_edge doivent être ≥ 2 (reçu {self.dim_node}, {self.dim_edge})")
        if self.n_heads < 1 or self.dim_node % self.n_heads != 0:
            raise ConfigError(f"dim_node={self.dim_node} doit être divisible par n_heads={self.n_heads}")
        if self.interaction not in INTERACTION_KINDS:
            raise ConfigError(f"interaction inconnue '{self.interaction}' (valides: {', '.join(INTERACTION_KINDS)})")
        if self.rbf not in RBF_MODES:
            raise ConfigError(f"rbf inconnu '{self.rbf}' (valides: {', '.join(RBF_MODES)})")
        if self.n_rme_blocks < 0:
            raise ConfigError("n_rme_blocks doit être ≥ 0")
        if self.n_interactions < 1 or self.n_iterations < 1:
            raise ConfigError("n_interactions et n_iterations doivent être ≥ 1")
        if not 0.0 < self.r_min < self.r_cut:
            raise ConfigError(f"Il faut 0 < r_min < r_cut (reçu r_min={self.r_min}, r_cut={self.r_cut})")
        if self.sigma is not None and self.sigma <= 0:
            raise ConfigError("sigma doit être > 0")
        if not 0.0 < self.halt_epsilon < 0.5:
            raise ConfigError("halt_epsilon doit être dans (0, 0.5)")
        if self.ponder_weight < 0:
            raise ConfigError("ponder_weight doit être ≥ 0")
        if self.ffn_factor < 1:
            raise ConfigError(f"ffn_factor doit être ≥ 1 (reçu {self.ffn_factor})")
        if self.species_vocab_size < 1 or self.relation_vocab_size < 1:
            raise ConfigError("Les vocabulaires doivent contenir au moins une entrée")
        return self

    @property
    def ponder_width(self) -> int:
        return self.ponder_hidden if self.ponder_hidden > 0 else max(2, self.dim_node // 8)

    @property
    def filter_width(self) -> int:
        return self.cfc_filters if self.cfc_filters > 0 else self.dim_node

    @property
    def ffn_width(self) -> int:
        """Largeur cachée des FFN position par position (ffn_factor·D)."""
        return self.ffn_factor * self.dim_node


@dataclass
class RunConfig:
    """Configuration complète d'un run (modèle + optimiseur + données + seeds)."""
    model: ModelConfig = field(default_factory=ModelConfig)
    # Optimiseur
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 32
    steps: int = 5000
    eval_every: int = 250
    loss_lambda: float = 0.99
    # Données
    train_data: Optional[str] = None
    bonds: Optional[str] = None
    val_data: Optional[str] = None
    toymm: bool = False
    toymm_samples: int = 4096
    toymm_noise: float = 0.05
    toymm_seed: int = 0
    toymm_topologies: int = 2  # 1 = gabarit seul, 2 = + variante C–O simple
    n_train: int = 1024
    n_val: int = 1024
    split_seed: int = 0
    # Protocole
    seeds: List[int] = field(default_factory=lambda: [0, 1, 2, 3])
    output_dir: str = "runs"

    def validate(self) -> "RunConfig":
        """Vérifie les invariants du run.

        Raises:
            ConfigError: Si une valeur est invalide ou un chemin introuvable
        """
        self.model.validate()
        if not self.seeds:
            raise ConfigError("La liste des seeds ne peut pas être vide")
        if not 0.0 <= self.loss_lambda <= 1.0:
            raise ConfigError(f"loss_lambda doit être dans [0, 1] (reçu {self.loss_lambda})")
        if self.lr < 0:
            raise ConfigError("lr doit être ≥ 0")
        if self.batch_size < 1 or self.steps < 0 or self.eval_every < 1:
            raise ConfigError("batch_size et eval_every doivent être ≥ 1, steps ≥ 0")
        if self.toymm_topologies not in (1, 2):
            raise ConfigError(f"toymm_topologies doit valoir 1 ou 2 (reçu {self.toymm_topologies})")
        if self.n_train < 1 or self.n_val < 0:
            raise ConfigError("n_train doit être ≥ 1 et n_val ≥ 0")
        for key in ("train_data", "bonds", "val_data"):
            path = getattr(self, key)
            if path is not None and not Path(path).exists():
                raise ConfigError(f"Fichier introuvable pour {key} : {path}")
        if not self.toymm and self.train_data is None:
            raise ConfigError("Aucune source de données : renseigner train_data ou toymm = true")
        return self

    def to_flat_dict(self) -> Dict[str, Any]:
        """Représentation plate (clés du fichier de configuration)."""
        flat = {k: v for k, v in asdict(self).items() if k != "model"}
        flat.update(asdict(self.model))
        return flat


MODEL_KEYS = {f.name for f in fields(ModelConfig)}
RUN_KEYS = {f.name for f in fields(RunConfig)} - {"model"}
ALIASES = {"lambda": "loss_lambda"}


def _read_flat_file(path: Path) -> Dict[str, Any]:
    """Lit le format texte plat `clé = valeur` (commentaires `#`)."""
    values: Dict[str, Any] = {}
    with open(path, "r", encoding="utf-8") as f:
        for line_number, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{line_number} : ligne sans '=' ({raw.strip()})")
            key, value = (part.strip() for part in line.split("=", 1))
            try:
                values[key] = yaml.safe_load(value) if value else None
            except yaml.YAMLError as e:
                raise ConfigError(f"{path}:{line_number} : valeur illisible pour {key} ({e})")
    return values


def read_config_file(path) -> Dict[str, Any]:
    """Lit un fichier de configuration YAML ou `clé = valeur`.

    Args:
        path: Chemin du fichier

    Returns:
        Dict[str, Any]: Valeurs brutes (clés non validées)
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Fichier de configuration introuvable : {path}")
    if path.suffix in (".yaml", ".yml"):
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
        if not isinstance(data, dict):
            raise ConfigError(f"{path} : un dictionnaire YAML est attendu")
        return data
    return _read_flat_file(path)


def _coerce(name: str, value: Any, default: Any) -> Any:
    """Convertit une valeur brute vers le type du champ."""
    if name == "seeds":
        if isinstance(value, int):
            return [value]
        if isinstance(value, str):
            try:
                return [int(s) for s in value.replace(" ", "").split(",") if s]
            except ValueError:
                raise ConfigError(f"seeds invalide : {value}")
        return [int(s) for s in value]
    if value is None:
        return None
    if isinstance(default, bool):
        if isinstance(value, str):
            return value.strip().lower() in ("1", "true", "yes", "on")
        return bool(value)
    try:
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float) or name == "sigma":
            return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"Valeur invalide pour {name} : {value!r}")
    return value


def apply_values(config: RunConfig, values: Dict[str, Any]) -> RunConfig:
    """Applique des valeurs (clés plates) sur une configuration.

    Raises:
        ConfigError: Si une clé est inconnue
    """
    for raw_key, value in values.items():
        key = ALIASES.get(raw_key, raw_key)
        if key in MODEL_KEYS:
            setattr(config.model, key, _coerce(key, value, getattr(config.model, key)))
        elif key in RUN_KEYS:
            setattr(config, key, _coerce(key, value, getattr(config, key)))
        else:
            valid = ", ".join(sorted(MODEL_KEYS | RUN_KEYS))
            raise ConfigError(f"Clé de configuration inconnue '{raw_key}'. Clés valides : {valid}")
    return config


def load_run_config(path=None, overrides: Optional[Dict[str, Any]] = None, validate: bool = True) -> RunConfig:
    """
    Charge la configuration d'un run.

    Ordre de priorité : défauts < src/parameters.yaml < fichier utilisateur
    < variables d'environnement < overrides explicites.

    Args:
        path: Fichier utilisateur (YAML ou `clé = valeur`), optionnel
        overrides: Valeurs prioritaires (ex: options CLI)
        validate: Valider la configuration finale

    Returns:
        RunConfig: Configuration prête à l'emploi
    """
    config = RunConfig()
    if PARAMETERS_PATH.exists():
        apply_values(config, read_config_file(PARAMETERS_PATH))
    if path is not None:
        apply_values(config, read_config_file(path))

    settings = get_settings()
    env_values = {}
    if settings["output_dir"]:
        env_values["output_dir"] = settings["output_dir"]
    if settings["steps"] is not None:
        env_values["steps"] = settings["steps"]
    if settings["lr"] is not None:
        env_values["lr"] = settings["lr"]
    if settings["seeds"]:
        env_values["seeds"] = settings["seeds"]
    apply_values(config, env_values)

    if overrides:
        apply_values(config, {k: v for k, v in overrides.items() if v is not None})
    if validate:
        config.validate()
    return config
