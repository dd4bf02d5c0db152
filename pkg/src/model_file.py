"""
Sérialisation des modèles (archive numpy `.npz`).

Contenu : un tableau `param/<nom>` par paramètre et une entrée `meta`
(texte YAML : version du format, hyper-paramètres, configuration du run,
constantes de standardisation, table des types atomiques artificiels).
"""

from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np
import yaml

from config import ModelConfig, RunConfig
from constants import LOG_EMOJIS, LOG_MESSAGES, MODEL_FILE_FORMAT
from errors import ParseError
from molct import MolCtModel, build_model
from readout import Standardizer

PARAM_PREFIX = "param/"


@dataclass
class ModelFile:
    format: str
    model_config: Dict[str, Any]
    standardizer: Dict[str, float]
    parameters: Dict[str, np.ndarray]
    run_config: Optional[Dict[str, Any]] = None
    species_map: Optional[Dict[str, int]] = None
    seed: Optional[int] = None
    extra: Dict[str, Any] = field(default_factory=dict)

    def to_model(self) -> MolCtModel:
        model = build_model(ModelConfig(**self.model_config), seed=self.seed or 0)
        model.store.load_arrays(self.parameters)
        model.standardizer = Standardizer(**self.standardizer)
        model.species_map = dict(self.species_map) if self.species_map is not None else None
        return model


def save_model(path, model: MolCtModel, run_config: Optional[RunConfig] = None, seed: Optional[int] = None,
               logger=None) -> Path:
    """Écrit le modèle ; les tableaux sont stockés tels quels (relecture bit à bit)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {
        "format": MODEL_FILE_FORMAT,
        "model_config": asdict(model.config),
        "run_config": run_config.to_flat_dict() if run_config is not None else None,
        "standardizer": model.standardizer.to_dict(),
        "species_map": model.species_map,
        "seed": seed,
    }
    arrays = {PARAM_PREFIX + name: tensor.data for name, tensor in model.store.items()}
    arrays["meta"] = np.array(yaml.safe_dump(meta, sort_keys=False, allow_unicode=True))
    with open(path, "wb") as f:
        np.savez(f, **arrays)
    if logger:
        logger.info(f"{LOG_EMOJIS['save']} " + LOG_MESSAGES["model_saved"].format(path=path))
    return path


def read_model_file(path) -> ModelFile:
    """
    Raises:
        ParseError: Fichier absent, illisible ou de format inconnu
    """
    path = Path(path)
    if not path.exists():
        raise ParseError(path, 0, "fichier modèle introuvable")
    try:
        with np.load(path, allow_pickle=False) as archive:
            meta = yaml.safe_load(str(archive["meta"]))
            parameters = {
                key[len(PARAM_PREFIX):]: archive[key].copy()
                for key in archive.files if key.startswith(PARAM_PREFIX)
            }
    except (OSError, ValueError, KeyError, yaml.YAMLError) as e:
        raise ParseError(path, 0, f"archive modèle illisible ({e})")
    if not isinstance(meta, dict) or meta.get("format") != MODEL_FILE_FORMAT:
        found = meta.get("format") if isinstance(meta, dict) else None
        raise ParseError(path, 0, f"format '{found}' non supporté (attendu {MODEL_FILE_FORMAT})")
    return ModelFile(
        format=meta["format"],
        model_config=meta["model_config"],
        standardizer=meta["standardizer"],
        parameters=parameters,
        run_config=meta.get("run_config"),
        species_map=meta.get("species_map"),
        seed=meta.get("seed"),
    )


def load_model(path) -> MolCtModel:
    return read_model_file(path).to_model()
