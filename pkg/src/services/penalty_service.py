"""
Hierarchical penalty Omega_{T,w} and its exact proximal operator.

Omega(beta) = sum over internal nodes l of w_l * ||beta_{A_l} - mean(beta_{A_l}) 1||_2.

The prox is evaluated bottom-up, one depth layer at a time: adding the penalty of a
node that is not below any already-added node only needs the closed-form group
shrinkage of the current iterate. Nodes of one layer have disjoint leaf ranges, so a
layer is processed with segment reductions over its concatenated ranges.
"""
import logging
from typing import Optional, Tuple, Union

import numpy as np

from config import settings
from src.exceptions import DimensionMismatch, NegativeLambda
from src.models.penalty import PenaltySpec
from src.models.tree import Tree

logger = logging.getLogger(__name__)

def default_weights(tree: Tree) -> np.ndarray:
    """w_l = a_l^{-1/2} on internal nodes, zero elsewhere"""
    weights = np.zeros(tree.n_nodes)
    internal = tree.internal_nodes
    weights[internal] = 1.0 / np.sqrt(tree.a[internal])
    return weights

def make_spec(tree: Tree, weights: Optional[np.ndarray] = None) -> PenaltySpec:
    return PenaltySpec(tree=tree, weights=default_weights(tree) if weights is None else weights)

def _check_length(tree: Tree, vector: np.ndarray, name: str) -> np.ndarray:
    vector = np.asarray(vector, dtype=float)
    if vector.shape != (tree.p,):
        raise DimensionMismatch(f"{name} has shape {vector.shape}, expected ({tree.p},)")
    return vector

# ===============================
# Penalty value
# ===============================

def omega_permuted(spec: PenaltySpec, beta_perm: np.ndarray) -> float:
    total = 0.0
    for layer in spec.tree.plan:
        v = beta_perm[layer.positions]
        spread = np.maximum.reduceat(v, layer.offsets) - np.minimum.reduceat(v, layer.offsets)
        means = np.add.reduceat(v, layer.offsets) / layer.sizes
        centered = v - np.repeat(means, layer.sizes)
        norms = np.sqrt(np.add.reduceat(centered * centered, layer.offsets))
        norms[spread == 0] = 0.0
        total += float(np.dot(spec.weights[layer.nodes], norms))
    return total

def omega(spec: PenaltySpec, beta: np.ndarray) -> float:
    beta = _check_length(spec.tree, beta, "beta")
    return omega_permuted(spec, spec.tree.to_permuted(beta))

# ===============================
# Proximal operator
# ===============================

def prox_group_update(
        beta0: np.ndarray,
        group: Union[slice, Tuple[int, int]],
        threshold: float
) -> np.ndarray:
    """
    Closed-form prox of threshold * ||D v||_2 applied to one contiguous group.

    With m the group mean, s the centered norm and rho = threshold / s, the group
    becomes m 1 when s == 0 or rho >= 1, else rho m 1 + (1 - rho) v.
    """
    if not isinstance(group, slice):
        group = slice(*group)
    out = np.array(beta0, dtype=float, copy=True)
    v = out[group]
    if v.size == 0:
        return out
    m = v.mean()
    centered = v - m
    s = float(np.sqrt(np.dot(centered, centered)))
    if s == 0.0 or threshold >= s:
        out[group] = m
    else:
        rho = threshold / s
        out[group] = rho * m + (1.0 - rho) * v
    return out

def prox_permuted(
        spec: PenaltySpec,
        lam: float,
        eta_perm: np.ndarray,
        compensated_threshold: Optional[int] = None
) -> np.ndarray:
    """prox of lam * Omega in permuted coordinates (no validation, used by the solvers)"""
    out = np.array(eta_perm, dtype=float, copy=True)
    if lam == 0.0:
        return out
    if compensated_threshold is None:
        compensated_threshold = settings.solver.compensated_threshold

    for layer in spec.tree.plan:
        sizes, offsets = layer.sizes, layer.offsets
        v = out[layer.positions]
        means = np.add.reduceat(v, offsets) / sizes
        centered = v - np.repeat(means, sizes)
        if sizes.max() >= compensated_threshold:
            # second pass picks up the rounding left in the first mean
            means = means + np.add.reduceat(centered, offsets) / sizes
            centered = v - np.repeat(means, sizes)
        spread = np.sqrt(np.add.reduceat(centered * centered, offsets))
        thresholds = lam * spec.weights[layer.nodes]
        with np.errstate(divide="ignore", invalid="ignore"):
            rho = np.where(spread > 0, thresholds / spread, np.inf)
        rho = np.minimum(rho, 1.0)
        rho_full = np.repeat(rho, sizes)
        out[layer.positions] = np.where(
            rho_full >= 1.0,
            np.repeat(means, sizes),
            v - rho_full * centered,
        )
    return out

def prox(spec: PenaltySpec, lam: float, eta: np.ndarray) -> np.ndarray:
    """argmin_beta 1/2 ||beta - eta||^2 + lam * Omega(beta), in original coordinates"""
    if lam < 0:
        raise NegativeLambda(f"lambda must be >= 0, got {lam}")
    eta = _check_length(spec.tree, eta, "eta")
    tree = spec.tree
    return tree.from_permuted(prox_permuted(spec, float(lam), tree.to_permuted(eta)))
