"""Optimiseur Adam (correction de biais) sur les paramètres nommés."""

from dataclasses import dataclass, field
from typing import Dict, Mapping

import numpy as np

from autodiff import Tensor
from errors import DimensionError, NonFiniteGradientError


@dataclass
class AdamState:
    """Moments d'Adam par paramètre + compteur de pas."""
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: Dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: Mapping[str, Tensor], grads: Mapping[str, np.ndarray], state: AdamState) -> AdamState:
    """
    Applique un pas d'Adam en place sur `params`.

    Tous les gradients sont vérifiés avant toute mise à jour : un gradient
    non fini rejette le pas entier (paramètres et moments inchangés).

    Args:
        params: Paramètres nommés (modifiés en place)
        grads: Gradients numpy de même forme (absent → gradient nul)
        state: État de l'optimiseur (modifié en place)

    Returns:
        AdamState: L'état mis à jour

    Raises:
        DimensionError: Si un gradient n'a pas la forme de son paramètre
        NonFiniteGradientError: Si un gradient contient NaN/inf
    """
    checked = {}
    for name, param in params.items():
        g = grads.get(name)
        g = np.zeros(param.shape) if g is None else np.asarray(g, dtype=np.float64)
        if g.shape != param.shape:
            raise DimensionError(f"adam_step[{name}]", param.shape, g.shape)
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(name)
        checked[name] = g

    state.step_count += 1
    t = state.step_count
    correction1 = 1.0 - state.beta1 ** t
    correction2 = 1.0 - state.beta2 ** t
    for name, param in params.items():
        g = checked[name]
        m = state.first_moment.get(name)
        v = state.second_moment.get(name)
        if m is None:
            m = np.zeros(param.shape)
            v = np.zeros(param.shape)
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        state.first_moment[name] = m
        state.second_moment[name] = v
        m_hat = m / correction1
        v_hat = v / correction2
        param.data -= state.lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return state
