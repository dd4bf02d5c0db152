"""Exceptions personnalisées pour Molecular CT."""


class MolCTError(Exception):
    """Base des erreurs du projet."""


class ConfigError(MolCTError):
    """Erreur de configuration (paramètres invalides ou manquants)."""


class ContractError(MolCTError):
    """Pré-condition violée par l'appelant."""


class DimensionError(ContractError):
    """Formes de tenseurs incompatibles."""

    def __init__(self, op, shape_a, shape_b=None, message=None):
        self.op = op
        self.shape_a = tuple(shape_a)
        self.shape_b = tuple(shape_b) if shape_b is not None else None
        if message is None:
            if self.shape_b is None:
                message = f"{op} : forme invalide {self.shape_a}"
            else:
                message = f"{op} : dimensions incompatibles {self.shape_a} et {self.shape_b}"
        super().__init__(message)


class DomainError(MolCTError):
    """Argument hors du domaine mathématique de l'opération."""


class VocabularyError(MolCTError):
    """Identifiant inconnu (espèce, relation, élément, variante...)."""


class DegeneracyError(MolCTError):
    """Particules confondues (distance quasi nulle)."""


# =============================================================================
# EXCEPTIONS DE DONNÉES ET NUMÉRIQUES
# =============================================================================

class ParseError(MolCTError):
    """Fichier mal formé, localisé par chemin et numéro de ligne."""

    def __init__(self, path, line_number, reason, message=None):
        self.path = str(path)
        self.line_number = line_number
        self.reason = reason
        if message is None:
            message = f"Erreur de lecture {self.path}:{line_number} : {reason}"
        super().__init__(message)


class NonFiniteGradientError(MolCTError):
    """Gradient non fini : le pas d'optimisation est rejeté."""

    def __init__(self, parameter_name, message=None):
        self.parameter_name = parameter_name
        if message is None:
            message = f"Gradient non fini pour le paramètre '{parameter_name}' (pas Adam rejeté)"
        super().__init__(message)


class NumericFailureError(MolCTError):
    """Perte non finie pendant l'entraînement."""

    def __init__(self, seed, batch_id, message=None):
        self.seed = seed
        self.batch_id = batch_id
        if message is None:
            message = f"Perte NaN/inf : arrêt du run seed={seed} (dernier batch={batch_id})"
        super().__init__(message)


class GradcheckFailure(MolCTError):
    """Au moins une suite de différences finies dépasse sa tolérance."""
