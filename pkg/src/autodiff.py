"""
Moteur de différentiation automatique en mode inverse (float64, tenseurs 2-D).

Chaque opération enregistre une règle de rétro-propagation écrite elle-même
avec des opérations `Tensor`. Quand `grad(..., create_graph=True)` est appelé,
la passe arrière est donc enregistrée comme un graphe ordinaire et peut être
dérivée une seconde fois (nécessaire pour l'apprentissage sur les forces,
F = −∇E, dont la perte dépend des paramètres via ∂E/∂x).

Le mode gradient est local au thread : plusieurs évaluations concurrentes
peuvent partager les mêmes paramètres en lecture seule.
"""

import threading
from contextlib import contextmanager
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from constants import LAYER_NORM_EPSILON
from errors import ContractError, DimensionError

ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence]

_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextmanager
def no_grad():
    """Désactive l'enregistrement du graphe pour le thread courant."""
    previous = is_grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = previous


@contextmanager
def enable_grad():
    """Réactive l'enregistrement du graphe pour le thread courant."""
    previous = is_grad_enabled()
    _state.enabled = True
    try:
        yield
    finally:
        _state.enabled = previous


def _as_array(value) -> np.ndarray:
    data = np.array(value, dtype=np.float64)
    if data.ndim == 0:
        return data.reshape(1, 1)
    if data.ndim == 1:
        return data.reshape(1, -1)
    if data.ndim > 2:
        raise DimensionError("tensor", data.shape, message=f"tensor : tenseur 2-D attendu, reçu {data.shape}")
    return data


class Tensor:
    """
    Tenseur 2-D float64 avec enregistrement optionnel du graphe de calcul.

    Les scalaires sont des matrices 1×1, les vecteurs lignes des matrices 1×n.
    """

    __slots__ = ("data", "requires_grad", "grad", "name", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data = _as_array(data)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self._parents: Tuple["Tensor", ...] = ()
        self._backward: Optional[Callable[["Tensor"], Sequence[Optional["Tensor"]]]] = None
        self.op = "leaf"

    # ------------------------------------------------------------------
    # Accès
    # ------------------------------------------------------------------
    @property
    def shape(self) -> Tuple[int, int]:
        return self.data.shape

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() sur un tenseur de forme {self.shape}")
        return float(self.data[0, 0])

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def is_leaf(self) -> bool:
        return self._backward is None

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self.op}{label})"

    # ------------------------------------------------------------------
    # Opérateurs
    # ------------------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, exponent):
        return power(self, exponent)

    def sum(self, axis: Optional[int] = None) -> "Tensor":
        return tsum(self, axis)

    def mean(self, axis: Optional[int] = None) -> "Tensor":
        return mean(self, axis)

    def reshape(self, rows: int, cols: int) -> "Tensor":
        return reshape(self, rows, cols)


def as_tensor(value: ArrayLike) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _result(data: np.ndarray, parents: Tuple[Tensor, ...], backward, op: str) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    out.requires_grad = False
    out._parents = ()
    out._backward = None
    out.op = op
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> Tuple[int, int]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(op, a.shape, b.shape)


def _unbroadcast(g: Tensor, shape: Tuple[int, int]) -> Tensor:
    """Ramène un gradient diffusé à la forme d'origine (somme sur les axes étendus)."""
    if g.shape == shape:
        return g
    if shape[0] == 1 and g.shape[0] != 1:
        g = tsum(g, axis=0)
    if shape[1] == 1 and g.shape[1] != 1:
        g = tsum(g, axis=1)
    return g


# =============================================================================
# OPÉRATIONS ÉLÉMENTAIRES
# =============================================================================

def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _result(a.data + b.data, (a, b), backward, "add")


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(neg(g), b.shape)

    return _result(a.data - b.data, (a, b), backward, "sub")


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)

    def backward(g):
        return _unbroadcast(mul(g, b), a.shape), _unbroadcast(mul(g, a), b.shape)

    return _result(a.data * b.data, (a, b), backward, "mul")


def div(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("div", a, b)

    def backward(g):
        ga = div(g, b)
        gb = neg(mul(g, div(a, mul(b, b))))
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _result(a.data / b.data, (a, b), backward, "div")


def neg(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    return _result(-x.data, (x,), lambda g: (neg(g),), "neg")


def matmul(a: ArrayLike, b: ArrayLike) -> Tensor:
    """Produit matriciel m×k · k×n.

    Raises:
        DimensionError: Si les dimensions internes diffèrent
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[1] != b.shape[0]:
        raise DimensionError("matmul", a.shape, b.shape)

    def backward(g):
        return matmul(g, transpose(b)), matmul(transpose(a), g)

    return _result(a.data @ b.data, (a, b), backward, "matmul")


def transpose(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    return _result(x.data.T.copy(), (x,), lambda g: (transpose(g),), "transpose")


def power(x: ArrayLike, exponent: float) -> Tensor:
    x = as_tensor(x)
    p = float(exponent)

    def backward(g):
        return (mul(g, mul(p, power(x, p - 1.0))),)

    return _result(np.power(x.data, p), (x,), backward, "power")


def sqrt(x: ArrayLike) -> Tensor:
    x = as_tensor(x)

    def backward(g):
        return (div(g, mul(2.0, sqrt(x))),)

    return _result(np.sqrt(x.data), (x,), backward, "sqrt")


def exp(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    return _result(np.exp(x.data), (x,), lambda g: (mul(g, exp(x)),), "exp")


def log(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    return _result(np.log(x.data), (x,), lambda g: (div(g, x),), "log")


def sin(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    return _result(np.sin(x.data), (x,), lambda g: (mul(g, cos(x)),), "sin")


def cos(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    return _result(np.cos(x.data), (x,), lambda g: (neg(mul(g, sin(x))),), "cos")


def _sigmoid_array(v: np.ndarray) -> np.ndarray:
    # Forme stable des deux côtés de zéro
    out = np.empty_like(v)
    positive = v >= 0
    out[positive] = 1.0 / (1.0 + np.exp(-v[positive]))
    ev = np.exp(v[~positive])
    out[~positive] = ev / (1.0 + ev)
    return out


def sigmoid(x: ArrayLike) -> Tensor:
    x = as_tensor(x)

    def backward(g):
        s = sigmoid(x)
        return (mul(g, mul(s, sub(1.0, s))),)

    return _result(_sigmoid_array(x.data), (x,), backward, "sigmoid")


def softplus(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    return _result(np.logaddexp(0.0, x.data), (x,), lambda g: (mul(g, sigmoid(x)),), "softplus")


def tabs(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    sign = Tensor(np.sign(x.data))
    return _result(np.abs(x.data), (x,), lambda g: (mul(g, sign),), "abs")


def clip_max(x: ArrayLike, ceiling: float) -> Tensor:
    """min(x, ceiling), gradient nul là où le plafond est atteint."""
    x = as_tensor(x)
    mask = Tensor((x.data < ceiling).astype(np.float64))
    return _result(np.minimum(x.data, ceiling), (x,), lambda g: (mul(g, mask),), "clip_max")


# =============================================================================
# RÉDUCTIONS ET RÉORGANISATIONS
# =============================================================================

def tsum(x: ArrayLike, axis: Optional[int] = None) -> Tensor:
    """Somme (axis None → 1×1, 0 → 1×n, 1 → m×1)."""
    x = as_tensor(x)
    if axis is None:
        data = np.array([[x.data.sum()]])
    elif axis in (0, 1):
        data = x.data.sum(axis=axis, keepdims=True)
    else:
        raise ContractError(f"sum : axe invalide {axis}")
    return _result(data, (x,), lambda g: (broadcast_to(g, x.shape),), "sum")


def mean(x: ArrayLike, axis: Optional[int] = None) -> Tensor:
    x = as_tensor(x)
    count = x.data.size if axis is None else x.shape[axis]
    return div(tsum(x, axis), float(count))


def broadcast_to(x: ArrayLike, shape: Tuple[int, int]) -> Tensor:
    x = as_tensor(x)
    shape = tuple(shape)
    try:
        data = np.broadcast_to(x.data, shape).copy()
    except ValueError:
        raise DimensionError("broadcast_to", x.shape, shape)
    return _result(data, (x,), lambda g: (_unbroadcast(g, x.shape),), "broadcast_to")


def reshape(x: ArrayLike, rows: int, cols: int) -> Tensor:
    x = as_tensor(x)
    if rows * cols != x.data.size:
        raise DimensionError("reshape", x.shape, (rows, cols))
    return _result(x.data.reshape(rows, cols).copy(), (x,), lambda g: (reshape(g, *x.shape),), "reshape")


def index_rows(x: ArrayLike, index) -> Tensor:
    """Sélection (avec répétition possible) de lignes ; le gradient s'accumule par occurrence."""
    x = as_tensor(x)
    index = np.asarray(index, dtype=np.int64)
    n_rows = x.shape[0]
    return _result(x.data[index], (x,), lambda g: (scatter_rows(g, index, n_rows),), "index_rows")


def scatter_rows(x: ArrayLike, index, n_rows: int) -> Tensor:
    """Somme les lignes de x dans une matrice n_rows×cols aux positions `index`."""
    x = as_tensor(x)
    index = np.asarray(index, dtype=np.int64)
    if index.shape[0] != x.shape[0]:
        raise DimensionError("scatter_rows", x.shape, index.shape)
    data = np.zeros((n_rows, x.shape[1]))
    np.add.at(data, index, x.data)
    return _result(data, (x,), lambda g: (index_rows(g, index),), "scatter_rows")


def slice_cols(x: ArrayLike, start: int, stop: int) -> Tensor:
    x = as_tensor(x)
    total = x.shape[1]
    return _result(x.data[:, start:stop].copy(), (x,), lambda g: (pad_cols(g, start, total),), "slice_cols")


def pad_cols(x: ArrayLike, start: int, total: int) -> Tensor:
    """Place x dans une matrice de `total` colonnes à partir de `start` (zéros ailleurs)."""
    x = as_tensor(x)
    stop = start + x.shape[1]
    if stop > total:
        raise DimensionError("pad_cols", x.shape, (x.shape[0], total))
    data = np.zeros((x.shape[0], total))
    data[:, start:stop] = x.data
    return _result(data, (x,), lambda g: (slice_cols(g, start, stop),), "pad_cols")


def concat(tensors: Sequence[ArrayLike], axis: int = 1) -> Tensor:
    """Concaténation le long des colonnes (axis=1) ou des lignes (axis=0)."""
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ContractError("concat : liste vide")
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise DimensionError("concat", tensors[0].shape, tensors[-1].shape)
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def backward(g):
        if axis == 1:
            return tuple(slice_cols(g, int(s), int(e)) for s, e in zip(bounds[:-1], bounds[1:]))
        return tuple(index_rows(g, np.arange(s, e)) for s, e in zip(bounds[:-1], bounds[1:]))

    return _result(data, tuple(tensors), backward, "concat")


def where(condition, a: ArrayLike, b: ArrayLike) -> Tensor:
    """Sélection élément par élément ; `condition` est une constante booléenne."""
    a, b = as_tensor(a), as_tensor(b)
    condition = np.asarray(condition, dtype=bool)
    if condition.ndim == 1:
        condition = condition.reshape(-1, 1)
    try:
        shape = np.broadcast_shapes(condition.shape, a.shape, b.shape)
    except ValueError:
        raise DimensionError("where", a.shape, b.shape)
    keep_a = Tensor(np.broadcast_to(condition, shape).astype(np.float64))
    keep_b = Tensor(1.0 - keep_a.data)

    def backward(g):
        return _unbroadcast(mul(g, keep_a), a.shape), _unbroadcast(mul(g, keep_b), b.shape)

    data = np.where(condition, a.data, b.data)
    return _result(np.broadcast_to(data, shape).copy(), (a, b), backward, "where")


# =============================================================================
# OPÉRATIONS COMPOSÉES
# =============================================================================

def softmax_rows(x: ArrayLike) -> Tensor:
    """Softmax par ligne, stabilisé par soustraction du maximum de chaque ligne."""
    x = as_tensor(x)
    row_max = Tensor(x.data.max(axis=1, keepdims=True))
    e = exp(sub(x, row_max))
    return div(e, tsum(e, axis=1))


def layer_norm(x: ArrayLike, gain: ArrayLike, bias: ArrayLike, epsilon: float = LAYER_NORM_EPSILON) -> Tensor:
    """
    Normalisation de couche appliquée à chaque ligne de x (m×D).

    Raises:
        DimensionError: Si D < 2 ou si gain/bias ne sont pas 1×D
    """
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    width = x.shape[1]
    if width < 2:
        raise DimensionError("layer_norm", x.shape, message=f"layer_norm : D ≥ 2 requis, reçu {x.shape}")
    if gain.shape != (1, width) or bias.shape != (1, width):
        raise DimensionError("layer_norm", x.shape, gain.shape)
    centered = sub(x, mean(x, axis=1))
    variance = mean(mul(centered, centered), axis=1)
    normalized = div(centered, sqrt(add(variance, epsilon)))
    return add(mul(normalized, gain), bias)


# =============================================================================
# PASSE ARRIÈRE
# =============================================================================

def topological_order(output: Tensor) -> List[Tensor]:
    """Ordre topologique (parents avant enfants) des noeuds menant à `output`."""
    order: List[Tensor] = []
    visited = set()
    stack = [(output, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def _accumulate(store: Dict[int, Tensor], node: Tensor, g: Tensor) -> None:
    key = id(node)
    if g.shape != node.shape:
        g = _unbroadcast(g, node.shape)
    store[key] = add(store[key], g) if key in store else g


def grad(output: Tensor, inputs: Sequence[Tensor], create_graph: bool = False) -> List[Tensor]:
    """
    Gradients de la sortie scalaire par rapport à `inputs`.

    Args:
        output: Tenseur 1×1
        inputs: Tenseurs par rapport auxquels dériver
        create_graph: Enregistrer la passe arrière (double dérivation)

    Returns:
        List[Tensor]: Un gradient par entrée (zéros si l'entrée n'intervient pas)

    Raises:
        ContractError: Si la sortie n'est pas scalaire
    """
    if output.shape != (1, 1):
        raise ContractError(f"backward : sortie scalaire attendue, reçu {output.shape}")
    inputs = list(inputs)
    wanted = {id(t) for t in inputs}
    found: Dict[int, Tensor] = {}
    if output.requires_grad:
        pending: Dict[int, Tensor] = {id(output): Tensor(np.ones((1, 1)))}
        mode = enable_grad() if create_graph else no_grad()
        with mode:
            for node in reversed(topological_order(output)):
                key = id(node)
                g = pending.pop(key, None)
                if g is None:
                    continue
                if key in wanted:
                    found[key] = g
                if node._backward is None:
                    continue
                for parent, parent_grad in zip(node._parents, node._backward(g)):
                    if parent_grad is not None and parent.requires_grad:
                        _accumulate(pending, parent, parent_grad)
    elif id(output) in wanted:
        found[id(output)] = Tensor(np.ones((1, 1)))

    results = []
    for t in inputs:
        g = found.get(id(t))
        results.append(g if g is not None else Tensor(np.zeros(t.shape)))
    return results


def backward(output: Tensor) -> None:
    """Accumule dans `.grad` (tableaux numpy) les gradients de toutes les feuilles."""
    leaves = [node for node in topological_order(output) if node.is_leaf() and node.requires_grad]
    for leaf, g in zip(leaves, grad(output, leaves)):
        leaf.grad = g.data.copy() if leaf.grad is None else leaf.grad + g.data


def finite_diff_grad(f: Callable[[Tensor], Union[Tensor, float]], x: Tensor, step: float = 1e-5,
                     indices: Optional[Iterable[Tuple[int, int]]] = None) -> Tensor:
    """
    Gradient par différences centrées (f(x+h) − f(x−h)) / 2h, composante par composante.

    `x.data` est perturbé en place puis restauré ; `indices` restreint les
    composantes évaluées (les autres valent 0).
    """
    def evaluate() -> float:
        value = f(x)
        return value.item() if isinstance(value, Tensor) else float(value)

    result = np.zeros(x.shape)
    positions = indices if indices is not None else np.ndindex(*x.shape)
    with no_grad():
        for position in positions:
            original = x.data[position]
            x.data[position] = original + step
            upper = evaluate()
            x.data[position] = original - step
            lower = evaluate()
            x.data[position] = original
            result[position] = (upper - lower) / (2.0 * step)
    return Tensor(result)
