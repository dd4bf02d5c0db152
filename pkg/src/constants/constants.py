#!/usr/bin/env python3
"""
Constantes centralisées pour Molecular CT.

Ce module contient :
- Emojis et messages de logs communs
- Table des éléments (symbole -> numéro atomique)
- Constantes numériques, colonnes CSV et codes de sortie
"""

# =============================================================================
# EMOJIS ET MESSAGES DE LOGS
# =============================================================================

LOG_EMOJIS = {
    # Actions générales
    "config": "📂",
    "save": "💾",

    # Statuts
    "ok": "✅",
    "error": "❌",
    "fail": "❌",
    "trophy": "🏆",
    "target": "🎯",

    # Données et métriques
    "data": "📊",
    "metrics": "📊",
    "list": "📋",
    "train": "🏋️",
    "eval": "🔎",
    "ablation": "🧪",
    "gradcheck": "🩺",
}

# Messages de logs communs
LOG_MESSAGES = {
    "config_loaded_from_file": "Configuration chargée depuis {path}",
    "config_defaults": "Aucun fichier de configuration fourni → valeurs par défaut + src/parameters.yaml",
    "dataset_loaded": "Jeu de données chargé : {count} échantillons ({path})",
    "dataset_generated": "Jeu toy-MM généré : {count} échantillons (seed={seed}, bruit={noise} Å)",
    "split_done": "Découpage : train={n_train} | val={n_val} (seed={seed})",
    "seed_start": "Entraînement seed={seed} | {steps} pas | batch={batch} | lr={lr}",
    "seed_done": "Seed {seed} terminée | perte val finale={val_loss:.6g}",
    "step_metrics": "seed={seed} pas={step} | {split} perte={loss:.6g} | E_mae={energy_mae:.4g} | F_mae={force_mae:.4g} | pas_moyens={steps:.2f}",
    "model_saved": "Modèle sauvegardé : {path}",
    "metrics_written": "Métriques écrites : {path}",
    "aggregate_written": "Agrégat multi-seeds écrit : {path}",
    "variant_start": "Variante '{variant}' ({count} paramètres)",
    "ablation_written": "Rapport d'ablation écrit : {path}",
    "gradcheck_suite": "Suite {suite} : pire erreur relative={worst:.3e} (tolérance {tolerance:.0e}) → {status}",
    "nan_loss": "Perte non finie (seed={seed}, batch={batch})",
    "error_config": "Erreur de configuration : {error}",
    "error_data": "Erreur de données : {error}",
    "error_numeric": "Erreur numérique : {error}",
    "error_contract": "Entrée incompatible avec le modèle : {error}",
    "error_unexpected": "Erreur : {error}",
}

# =============================================================================
# ÉLÉMENTS CHIMIQUES
# =============================================================================

ELEMENT_SYMBOLS = [
    "X", "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne",
    "Na", "Mg", "Al", "Si", "P", "S", "Cl", "Ar", "K", "Ca",
    "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn",
    "Ga", "Ge", "As", "Se", "Br", "Kr",
]

SYMBOL_TO_NUMBER = {symbol: number for number, symbol in enumerate(ELEMENT_SYMBOLS) if number > 0}

# =============================================================================
# CONSTANTES NUMÉRIQUES
# =============================================================================

LAYER_NORM_EPSILON = 1e-5
MASK_LOGIT = -1e30

# (premier ordre coordonnées, premier ordre paramètres, second ordre force-loss)
GRADCHECK_TOLERANCES = {
    "forces_vs_energy": 1e-5,
    "param_grad_energy": 1e-5,
    "param_grad_force_loss": 1e-4,
}

# =============================================================================
# FORMATS DE SORTIE
# =============================================================================

METRICS_CSV_COLUMNS = ["step", "split", "loss", "energy_mae", "force_mae", "mean_ponder_steps"]
AGGREGATE_METRICS = ["loss", "energy_mae", "force_mae", "mean_ponder_steps"]
AGGREGATE_CSV_COLUMNS = ["step", "split", "n_seeds"] + [f"{m}_{s}" for m in AGGREGATE_METRICS for s in ("mean", "std")]
LOSS_TERMS_CSV_COLUMNS = ["step", "loss", "energy_term", "force_term", "ponder_term"]
ABLATION_CSV_COLUMNS = [
    "variant", "parameter_count", "train_loss_mean", "train_loss_std",
    "val_loss_mean", "val_loss_std", "val_over_train",
]
FEATURES_CSV_COLUMNS = ["sample_id", "i", "j", "distance", "cutoff", "relation_type"]
PREDICTIONS_CSV_COLUMNS = ["sample_id", "E_pred", "E_label", "force_error_norm"]
DIAGNOSTICS_CSV_COLUMNS = ["interaction", "node", "halting_step", "attention_row"]

MODEL_FILE_FORMAT = "molct-model/1"

ABLATION_VARIANTS = [
    "cfc-r",
    "cfc-logr",
    "ea-tied",
    "ea-stacked",
    "niu-1",
    "niu-3",
    "rme-on",
    "rme-off",
    "artificial-atom-types",
]

# Codes de sortie CLI
EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3
