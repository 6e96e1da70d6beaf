"""Antenna selection network and the M_t-hot certification machinery.

The network is a free parameter vector pushed through a small dense stack
into softmax probabilities.  The hard mask keeps the M_t most probable
antennas; its differentiable stand-in is the probability vector scaled by
M_t, and a two-norm penalty drives that stand-in toward an exact M_t-hot
vector.  During backpropagation the hard mask node hands its gradient to
the stand-in (see :func:`mimoxl.autodiff.substitute`).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .layers import Dense, init_stack, stack_leaves, stack_params

DEFAULT_CERT_TOL = 1e-6


@dataclass
class AsnParams:
    """Trainable state: theta0 plus the dense stack producing the logits."""

    theta0: np.ndarray
    layers: list[Dense]

    def flat_params(self) -> list[np.ndarray]:
        return [self.theta0] + stack_params(self.layers)

    def set_flat_params(self, flat):
        self.theta0 = flat[0]
        rest = flat[1:]
        for i, layer in enumerate(self.layers):
            layer.W = rest[2 * i]
            layer.b = rest[2 * i + 1]


@dataclass
class SelectionState:
    logits: np.ndarray
    probs: np.ndarray
    hard: np.ndarray
    soft: np.ndarray
    indices: np.ndarray = field(default_factory=lambda: np.array([], dtype=int))


def init_asn_params(n_t: int, rng: np.random.Generator, n_layers: int = 3, width: int | None = None) -> AsnParams:
    """Random init: theta0 ~ 0.1 N(0,1), Glorot-uniform weights, zero biases."""
    if width is None:
        width = n_t
    dims = [n_t] + [width] * (n_layers - 1) + [n_t]
    theta0 = 0.1 * rng.standard_normal(n_t)
    return AsnParams(theta0=theta0, layers=init_stack(dims, rng, final_activation="linear"))


def hard_select(p: np.ndarray, m_t: int) -> np.ndarray:
    """Indicator of the M_t largest entries; ties go to the lowest index."""
    p = np.asarray(p, dtype=float)
    n_t = p.shape[0]
    if not 1 <= m_t < n_t:
        raise ValueError(f"need 1 <= M_t < N_t, got M_t={m_t}, N_t={n_t}")
    order = np.argsort(-p, kind="stable")
    s = np.zeros(n_t)
    s[order[:m_t]] = 1.0
    return s


def soft_select(p: np.ndarray, m_t: int) -> np.ndarray:
    """Differentiable stand-in M_t * p; sums to M_t when p sums to 1."""
    return m_t * np.asarray(p, dtype=float)


def selected_indices(s: np.ndarray) -> np.ndarray:
    return np.flatnonzero(s > 0.5)


def asn_forward(params: AsnParams, m_t: int) -> SelectionState:
    """Plain-numpy forward pass (no tape); used for inference and tests."""
    x = params.theta0
    for layer in params.layers:
        x = layer.W @ x + layer.b
        if layer.activation == "relu":
            x = np.maximum(x, 0.0)
    logits = x
    z = logits - np.max(logits)
    e = np.exp(z)
    probs = e / np.sum(e)
    hard = hard_select(probs, m_t)
    soft = soft_select(probs, m_t)
    return SelectionState(logits=logits, probs=probs, hard=hard, soft=soft, indices=selected_indices(hard))


def asn_graph(tape: ad.Tape, params: AsnParams, m_t: int):
    """Build the selection subgraph on a tape.

    Returns (state, soft_node, hard_node, leaves): ``hard_node`` is the
    substitution node whose forward value is the hard mask and whose
    backward route is the identity of the soft stand-in.
    """
    theta0 = tape.leaf(params.theta0)
    triples, leaves = stack_leaves(tape, params.layers)
    x = theta0
    for W, b, activation in triples:
        y = ad.add(ad.matmul(W, x), b)
        x = ad.relu(y) if activation == "relu" else y
    probs = ad.softmax(x)
    soft = ad.scale(probs, float(m_t))
    hard = hard_select(probs.value, m_t)
    hard_node = ad.substitute(soft, hard)
    state = SelectionState(
        logits=x.value.copy(),
        probs=probs.value.copy(),
        hard=hard,
        soft=soft.value.copy(),
        indices=selected_indices(hard),
    )
    return state, soft, hard_node, [theta0] + leaves


def asn_penalty(p_tilde: np.ndarray, m_t: int, alpha1: float, alpha2: float) -> float:
    """alpha1 (|v|_2^2 - M_t)^2 + alpha2 (|v|_3^3 - M_t)^2, always >= 0."""
    if alpha1 <= 0 or alpha2 <= 0:
        raise ValueError("penalty weights must be > 0")
    v = np.asarray(p_tilde, dtype=float)
    r2 = np.sum(v**2) - m_t
    r3 = np.sum(v**3) - m_t
    return float(alpha1 * r2**2 + alpha2 * r3**2)


def asn_penalty_graph(soft: ad.Tensor, m_t: int, alpha1: float, alpha2: float) -> ad.Tensor:
    """Tape version of :func:`asn_penalty` acting on the soft-selection node."""
    tape = soft.tape
    target = tape.constant(float(m_t))
    r2 = ad.sub(ad.tsum(ad.square(soft)), target)
    r3 = ad.sub(ad.tsum(ad.cube(soft)), target)
    return ad.add(ad.scale(ad.square(r2), alpha1), ad.scale(ad.square(r3), alpha2))


def uniform_pattern(n_t: int, m_t: int) -> np.ndarray:
    """Evenly spaced deterministic mask: indices round(i*N_t/M_t)."""
    if not 1 <= m_t < n_t:
        raise ValueError(f"need 1 <= M_t < N_t, got M_t={m_t}, N_t={n_t}")
    idx = np.unique(np.round(np.arange(m_t) * n_t / m_t).astype(int))
    s = np.zeros(n_t)
    s[idx] = 1.0
    if int(s.sum()) != m_t:
        raise ValueError("uniform pattern collided; reduce M_t")
    return s


# ---------------------------------------------------------------------------
# M_t-hot certification (the norm-constraint characterization)


def is_mt_hot(v: np.ndarray, m_t: int, tol: float) -> bool:
    """Certify v by its first three power sums, each within tol of M_t."""
    if tol <= 0:
        raise ValueError("tol must be > 0")
    v = np.asarray(v, dtype=float)
    if np.any(v < -tol):
        raise ValueError("certification requires (near) nonnegative entries")
    return (
        abs(np.sum(v) - m_t) <= tol
        and abs(np.sum(v**2) - m_t) <= tol
        and abs(np.sum(v**3) - m_t) <= tol
    )


def distance_to_mt_hot(v: np.ndarray, m_t: int) -> float:
    """Max-norm distance to the nearest exact M_t-hot vector."""
    v = np.asarray(v, dtype=float)
    target = hard_select(v, m_t) if 1 <= m_t < len(v) else np.ones_like(v)
    return float(np.max(np.abs(v - target)))


def _project_simplex(v: np.ndarray, total: float) -> np.ndarray:
    """Euclidean projection of each row of v onto {x >= 0, sum x = total}."""
    u = np.sort(v, axis=1)[:, ::-1]
    css = np.cumsum(u, axis=1) - total
    ar = np.arange(1, v.shape[1] + 1)
    cond = u - css / ar > 0
    rho = cond.shape[1] - 1 - np.argmax(cond[:, ::-1], axis=1)
    theta = css[np.arange(v.shape[0]), rho] / (rho + 1)
    return np.maximum(v - theta[:, None], 0.0)


def _residuals(v: np.ndarray, m_t: int):
    r2 = np.sum(v**2, axis=1) - m_t
    r3 = np.sum(v**3, axis=1) - m_t
    return r2, r3


def lemma1_search(
    n_t: int,
    m_t: int,
    trials: int,
    rng: np.random.Generator,
    n_descents: int = 200,
    cert_tol: float = DEFAULT_CERT_TOL,
    residual_tol: float = 1e-8,
    max_iters: int = 20000,
) -> dict:
    """Stress-test the power-sum certification from two directions.

    (a) random nonnegative vectors with the right element sum: none that is
    not (numerically) M_t-hot may pass :func:`is_mt_hot`;
    (b) projected gradient descent on the squared power-sum residuals over
    the scaled simplex: every run that converges below ``residual_tol``
    must land on a certified M_t-hot vector.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if not 1 <= m_t < n_t:
        raise ValueError(f"need 1 <= M_t < N_t, got M_t={m_t}, N_t={n_t}")

    # (a) rejection sweep over random simplex-scaled vectors
    false_positives = 0
    witnesses = []
    chunk = 20000
    remaining = trials
    while remaining > 0:
        k = min(chunk, remaining)
        remaining -= k
        e = rng.exponential(size=(k, n_t))
        v = m_t * e / np.sum(e, axis=1, keepdims=True)
        ok2 = np.abs(np.sum(v**2, axis=1) - m_t) <= cert_tol
        ok3 = np.abs(np.sum(v**3, axis=1) - m_t) <= cert_tol
        passing = np.flatnonzero(ok2 & ok3)
        for i in passing:
            if distance_to_mt_hot(v[i], m_t) > 10.0 * cert_tol:
                false_positives += 1
                if len(witnesses) < 5:
                    witnesses.append(v[i].copy())

    # (b) projected descent on F(v) = r2^2 + r3^2 over {v >= 0, sum v = M_t}.
    # A first-order phase finds the basin; because the residual surfaces
    # meet the simplex tangentially at the hot vertices, the tail switches
    # to projected Gauss-Newton steps on [r1, r2, r3] to actually reach the
    # residual tolerance.
    v = _project_simplex(rng.uniform(0.0, 1.0, size=(n_descents, n_t)), float(m_t))
    step = np.full(n_descents, 0.05)
    r2, r3 = _residuals(v, m_t)
    f = r2**2 + r3**2
    for _ in range(min(max_iters, 1500)):
        grad = (2.0 * r2)[:, None] * (2.0 * v) + (2.0 * r3)[:, None] * (3.0 * v**2)
        trial = _project_simplex(v - step[:, None] * grad, float(m_t))
        t2, t3 = _residuals(trial, m_t)
        ft = t2**2 + t3**2
        improved = ft <= f
        v = np.where(improved[:, None], trial, v)
        f = np.where(improved, ft, f)
        r2 = np.where(improved, t2, r2)
        r3 = np.where(improved, t3, r3)
        step = np.where(improved, np.minimum(step * 1.1, 1.0), step * 0.5)

    eye3 = 1e-12 * np.eye(3)
    for _ in range(max_iters):
        r1 = np.sum(v, axis=1) - m_t
        r2, r3 = _residuals(v, m_t)
        if max(np.abs(r2).max(), np.abs(r3).max()) < 0.1 * residual_tol:
            break
        rho = np.stack([r1, r2, r3], axis=1)
        J = np.stack([np.ones_like(v), 2.0 * v, 3.0 * v**2], axis=1)
        JJt = np.einsum("bij,bkj->bik", J, J) + eye3
        lam = np.linalg.solve(JJt, -rho[:, :, None])
        d = np.einsum("bji,bjk->bki", J, lam)[:, 0, :]
        v = _project_simplex(v + d, float(m_t))
    r2, r3 = _residuals(v, m_t)
    converged = (np.abs(r2) < residual_tol) & (np.abs(r3) < residual_tol)
    certified = 0
    uncertified = []
    for i in np.flatnonzero(converged):
        if is_mt_hot(np.maximum(v[i], 0.0), m_t, cert_tol):
            certified += 1
        else:
            uncertified.append(v[i].copy())

    return {
        "n_t": n_t,
        "m_t": m_t,
        "trials": trials,
        "false_positives": false_positives,
        "witnesses": witnesses,
        "descents": n_descents,
        "converged": int(np.sum(converged)),
        "certified": certified,
        "uncertified": uncertified,
        "limits": v,
    }
