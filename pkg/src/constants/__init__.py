#!/usr/bin/env python3
"""
Module constants pour Molecular CT.

Ce module contient les constantes partagées.
"""

from .constants import (
    LOG_EMOJIS,
    LOG_MESSAGES,
    ELEMENT_SYMBOLS,
    SYMBOL_TO_NUMBER,
    LAYER_NORM_EPSILON,
    MASK_LOGIT,
    METRICS_CSV_COLUMNS,
    AGGREGATE_METRICS,
    AGGREGATE_CSV_COLUMNS,
    LOSS_TERMS_CSV_COLUMNS,
    ABLATION_CSV_COLUMNS,
    FEATURES_CSV_COLUMNS,
    PREDICTIONS_CSV_COLUMNS,
    DIAGNOSTICS_CSV_COLUMNS,
    ABLATION_VARIANTS,
    GRADCHECK_TOLERANCES,
    EXIT_OK,
    EXIT_USAGE,
    EXIT_DATA,
    EXIT_NUMERIC,
    MODEL_FILE_FORMAT,
)

__all__ = [
    "LOG_EMOJIS",
    "LOG_MESSAGES",
    "ELEMENT_SYMBOLS",
    "SYMBOL_TO_NUMBER",
    "LAYER_NORM_EPSILON",
    "MASK_LOGIT",
    "METRICS_CSV_COLUMNS",
    "AGGREGATE_METRICS",
    "AGGREGATE_CSV_COLUMNS",
    "LOSS_TERMS_CSV_COLUMNS",
    "ABLATION_CSV_COLUMNS",
    "FEATURES_CSV_COLUMNS",
    "PREDICTIONS_CSV_COLUMNS",
    "DIAGNOSTICS_CSV_COLUMNS",
    "ABLATION_VARIANTS",
    "GRADCHECK_TOLERANCES",
    "EXIT_OK",
    "EXIT_USAGE",
    "EXIT_DATA",
    "EXIT_NUMERIC",
    "MODEL_FILE_FORMAT",
]
