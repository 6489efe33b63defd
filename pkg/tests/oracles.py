"""
Independent reference solvers, deliberately slow and structure-agnostic.
"""
import numpy as np

from src.models.penalty import PenaltySpec

def centering_operators(spec: PenaltySpec):
    """One (|A_l| x p) matrix per internal node with nonzero weight: rows of w_l (I - 11'/a) S_l"""
    tree = spec.tree
    blocks = []
    for node in tree.internal_nodes:
        w = spec.weights[node]
        if w == 0:
            continue
        members = tree.leaf_set(int(node))
        a = len(members)
        block = np.zeros((a, tree.p))
        block[np.arange(a), members] = 1.0
        block -= block.mean(axis=0, keepdims=True)
        blocks.append(w * block)
    return blocks

def penalty_value(blocks, beta: np.ndarray) -> float:
    return float(sum(np.linalg.norm(B @ beta) for B in blocks))

def prox_objective(blocks, lam: float, eta: np.ndarray, beta: np.ndarray) -> float:
    return 0.5 * float(np.dot(beta - eta, beta - eta)) + lam * penalty_value(blocks, beta)

def dual_prox(spec: PenaltySpec, lam: float, eta: np.ndarray, iterations: int = 50000) -> np.ndarray:
    """
    Accelerated projected gradient on the dual of 1/2 ||b - eta||^2 + lam sum ||C_l b||:
    b = eta - sum C_l' u_l with ||u_l|| <= lam.
    """
    blocks = centering_operators(spec)
    if not blocks or lam == 0:
        return np.array(eta, dtype=float)
    C = np.vstack(blocks)
    sizes = [B.shape[0] for B in blocks]
    bounds = np.cumsum([0] + sizes)
    step = 1.0 / max(np.linalg.norm(C, 2) ** 2, 1e-12)

    def project(u):
        out = u.copy()
        for start, stop in zip(bounds[:-1], bounds[1:]):
            norm = np.linalg.norm(out[start:stop])
            if norm > lam:
                out[start:stop] *= lam / norm
        return out

    u = np.zeros(C.shape[0])
    v, t = u.copy(), 1.0
    for _ in range(iterations):
        beta = eta - C.T @ v
        u_new = project(v + step * (C @ beta))
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        v = u_new + ((t - 1.0) / t_new) * (u_new - u)
        u, t = u_new, t_new
    return eta - C.T @ u

def ista(X, y, grad_loss, loss, prox, penalty, lam, iterations=20000):
    """Plain proximal gradient with step 1/L, no momentum; returns (x, objective)"""
    n, p = X.shape
    L = np.linalg.norm(X, 2) ** 2 / n
    step = 1.0 / L
    x = np.zeros(p)
    for _ in range(iterations):
        x = prox(x - step * grad_loss(x), step * lam)
    return x, loss(x) + lam * penalty(x)
