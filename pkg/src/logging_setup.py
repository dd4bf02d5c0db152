"""
Journalisation loguru de Molecular CT.

Les messages vont sur stderr : stdout reste aux résultats imprimés par la CLI
(`clé=valeur`, comptes de paramètres, lignes PASS/FAIL). Un fichier tournant
optionnel (LOG_DIR/LOG_FILE, LOG_FILE vide pour le couper) reçoit la même chose,
et `run_log` ajoute le journal propre à un run dans son répertoire de sortie.
"""

import sys
from contextlib import contextmanager, suppress
from pathlib import Path
from typing import Optional

from loguru import logger

from config import get_settings

LOG_FORMAT = "{time:YYYY-MM-DD HH:mm:ss} | {level:<7} | {message}"


def setup_logging(level: Optional[str] = None):
    """
    Configure loguru (appel idempotent : les puits existants sont retirés).

    Args:
        level: Niveau forcé (défaut : LOG_LEVEL de l'environnement)

    Returns:
        Le logger loguru configuré
    """
    logger.remove()
    settings = get_settings()
    level = (level or settings["log_level"]).upper()
    logger.add(sys.stderr, format=LOG_FORMAT, level=level, colorize=True)

    if not settings["log_file"]:
        return logger
    log_dir = Path(settings["log_dir"])
    try:
        log_dir.mkdir(parents=True, exist_ok=True)
        logger.add(
            log_dir / settings["log_file"],
            format=LOG_FORMAT,
            level=level,
            rotation=settings["log_rotation"],
            retention=settings["log_retention"],
            compression=settings["log_compression"],
            enqueue=True,
            backtrace=False,
            diagnose=False,
        )
    except OSError as e:
        logger.warning(f"⚠️ Journal fichier désactivé ({log_dir}) : {e}")
    return logger


@contextmanager
def run_log(directory, name: str = "run.log"):
    """Recopie tous les messages émis dans le bloc vers `directory/name`."""
    path = Path(directory) / name
    path.parent.mkdir(parents=True, exist_ok=True)
    sink_id = logger.add(path, format=LOG_FORMAT, level="DEBUG", backtrace=False, diagnose=False)
    try:
        yield path
    finally:
        # un setup_logging() dans le bloc a pu retirer le puits
        with suppress(ValueError):
            logger.remove(sink_id)
