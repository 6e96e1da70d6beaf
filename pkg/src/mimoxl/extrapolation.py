"""Antenna-domain extrapolation network.

The network refines a coarse dense-stack estimate through a fine stage wired
like one step of the classic fourth-order Runge-Kutta integrator: five
subnetworks K_0..K_4 combined with trainable coefficients a_1..a_3 and
b_1..b_4 that start at the classic tableau (1/2, 1/2, 1) and
(1/6, 1/3, 1/3, 1/6).  Covariance outputs pass through a final layer that
makes the represented complex matrix exactly Hermitian.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .layers import Dense, apply_dense, init_dense, init_stack, stack_leaves, stack_params

RK_A_INIT = (0.5, 0.5, 1.0)
RK_B_INIT = (1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0)


@dataclass
class AdenParams:
    """Extrapolator parameters for one task and fine-stage kind.

    ``fine_kind="rk"`` uses the Runge-Kutta wiring (f0, fk[0..3], f5, rk_a,
    rk_b); ``fine_kind="plain"`` swaps the whole fine stage for a dense
    stack with the same total hidden-unit count.  ``coarse`` is None for the
    beam task, which skips the coarse stage.
    """

    task: str
    fine_kind: str
    coarse: list[Dense] | None
    f0: Dense | None = None
    fk: list[Dense] | None = None
    f5: Dense | None = None
    rk_a: np.ndarray | None = None
    rk_b: np.ndarray | None = None
    plain: list[Dense] | None = None
    n_t: int = 0

    def flat_params(self) -> list[np.ndarray]:
        out = []
        if self.coarse is not None:
            out.extend(stack_params(self.coarse))
        if self.fine_kind == "rk":
            out.extend(stack_params([self.f0] + self.fk + [self.f5]))
            out.extend([self.rk_a, self.rk_b])
        else:
            out.extend(stack_params(self.plain))
        return out

    def set_flat_params(self, flat):
        flat = list(flat)
        pos = 0

        def take_stack(layers):
            nonlocal pos
            for layer in layers:
                layer.W = flat[pos]
                layer.b = flat[pos + 1]
                pos += 2

        if self.coarse is not None:
            take_stack(self.coarse)
        if self.fine_kind == "rk":
            take_stack([self.f0] + self.fk + [self.f5])
            self.rk_a = flat[pos]
            self.rk_b = flat[pos + 1]
            pos += 2
        else:
            take_stack(self.plain)
        if pos != len(flat):
            raise ValueError("parameter list does not match the network")


def init_aden_params(
    n_t: int,
    task: str,
    rng: np.random.Generator,
    width: int | None = None,
    coarse_hidden: tuple[int, ...] | None = None,
    n_beams: int | None = None,
    fine_kind: str = "rk",
) -> AdenParams:
    """Desk-scale defaults: subnet width 128 for channel/beam, 2*N_t^2 for CCM."""
    if task not in ("channel", "beam", "ccm"):
        raise ValueError(f"unknown task {task!r}")
    if fine_kind not in ("rk", "plain"):
        raise ValueError(f"unknown fine stage {fine_kind!r}")
    if task == "ccm":
        in_dim = out_dim = 2 * n_t * n_t
        width = width or 2 * n_t * n_t
        coarse_hidden = coarse_hidden or (width,)
    elif task == "channel":
        in_dim = out_dim = 2 * n_t
        width = width or 128
        coarse_hidden = coarse_hidden or (128, 128)
    else:  # beam: fine stage only, logits out
        if n_beams is None:
            raise ValueError("beam task needs the codebook size")
        in_dim, out_dim = 2 * n_t, n_beams
        width = width or 128
        coarse_hidden = None

    coarse = None
    fine_in = in_dim
    if coarse_hidden is not None:
        coarse = init_stack([in_dim, *coarse_hidden, in_dim], rng, final_activation="linear")
        fine_in = in_dim

    params = AdenParams(task=task, fine_kind=fine_kind, coarse=coarse, n_t=n_t)
    if fine_kind == "rk":
        params.f0 = init_dense(width, fine_in, rng, activation="relu")
        params.fk = [init_dense(width, width, rng, activation="relu") for _ in range(4)]
        params.f5 = init_dense(out_dim, width, rng, activation="linear")
        params.rk_a = np.array(RK_A_INIT)
        params.rk_b = np.array(RK_B_INIT)
    else:
        # same number of neurons: f0 plus the four K subnets hold 5*width
        # hidden units, so the plain stack gets five hidden layers of width
        params.plain = init_stack([fine_in] + [width] * 5 + [out_dim], rng, final_activation="linear")
    return params


def _fine_graph_rk(tape, params: AdenParams, u_c):
    (f0_t,), f0_leaves = stack_leaves(tape, [params.f0])
    fk_triples, fk_leaves = stack_leaves(tape, params.fk)
    (f5_t,), f5_leaves = stack_leaves(tape, [params.f5])
    rk_a = tape.leaf(params.rk_a)
    rk_b = tape.leaf(params.rk_b)
    a = [ad.pick(rk_a, i) for i in range(3)]
    b = [ad.pick(rk_b, i) for i in range(4)]

    k0 = apply_dense([f0_t], u_c)
    k1 = apply_dense([fk_triples[0]], k0)
    k2 = apply_dense([fk_triples[1]], ad.add(k0, ad.mul_scalar(k1, a[0])))
    k3 = apply_dense([fk_triples[2]], ad.add(k0, ad.mul_scalar(k2, a[1])))
    k4 = apply_dense([fk_triples[3]], ad.add(k0, ad.mul_scalar(k3, a[2])))
    mix = ad.add(k0, ad.mul_scalar(k1, b[0]))
    mix = ad.add(mix, ad.mul_scalar(k2, b[1]))
    mix = ad.add(mix, ad.mul_scalar(k3, b[2]))
    mix = ad.add(mix, ad.mul_scalar(k4, b[3]))
    u_f = apply_dense([f5_t], mix)
    return u_f, f0_leaves + fk_leaves + f5_leaves + [rk_a, rk_b]


def aden_graph(tape: ad.Tape, params: AdenParams, z):
    """Full extrapolator on the tape.

    Returns (u_c_node, u_f_node, leaves); u_c_node is None for the beam
    task.  ``z`` may be a vector node or an (in_dim, batch) matrix node.
    The CCM task ends with the Hermitian packing layer.
    """
    leaves = []
    u_c = None
    x = z
    if params.coarse is not None:
        triples, coarse_leaves = stack_leaves(tape, params.coarse)
        u_c = apply_dense(triples, x)
        leaves.extend(coarse_leaves)
        x = u_c
    if params.fine_kind == "rk":
        u_f, fine_leaves = _fine_graph_rk(tape, params, x)
    else:
        triples, fine_leaves = stack_leaves(tape, params.plain)
        u_f = apply_dense(triples, x)
    leaves.extend(fine_leaves)
    if params.task == "ccm":
        u_f = ad.hermitian_packed(u_f, params.n_t)
        if u_c is not None:
            u_c = ad.hermitian_packed(u_c, params.n_t)
    return u_c, u_f, leaves


def coarse_forward(z: np.ndarray, params: AdenParams) -> np.ndarray:
    """Coarse-stage output for a packed input (tape run, value returned)."""
    if params.coarse is None:
        raise ValueError("this network has no coarse stage")
    tape = ad.Tape()
    z_node = tape.constant(np.asarray(z, dtype=float))
    triples, _ = stack_leaves(tape, params.coarse)
    return apply_dense(triples, z_node).value.copy()


def fine_forward(u_c: np.ndarray, params: AdenParams) -> np.ndarray:
    """Fine-stage output from a coarse estimate (tape run, value returned)."""
    tape = ad.Tape()
    u_node = tape.constant(np.asarray(u_c, dtype=float))
    if params.fine_kind == "rk":
        u_f, _ = _fine_graph_rk(tape, params, u_node)
    else:
        triples, _ = stack_leaves(tape, params.plain)
        u_f = apply_dense(triples, u_node)
    return u_f.value.copy()


def aden_penalty(u_true: np.ndarray, u_c: np.ndarray, u_f: np.ndarray, beta1: float, beta2: float) -> float:
    """beta1 |u - u_c|_2^2 + beta2 |u - u_f|_2^2 on packed vectors."""
    if beta1 <= 0 or beta2 <= 0:
        raise ValueError("penalty weights must be > 0")
    u_true = np.asarray(u_true, dtype=float)
    if u_true.shape != np.shape(u_c) or u_true.shape != np.shape(u_f):
        raise ValueError("penalty terms need equal shapes")
    return float(beta1 * np.sum((u_true - u_c) ** 2) + beta2 * np.sum((u_true - u_f) ** 2))


def aden_penalty_graph(u_true: ad.Tensor, u_c, u_f, beta1: float, beta2: float, batch: int = 1) -> ad.Tensor:
    """Tape version of the extrapolation penalty, averaged over the batch."""
    term_f = ad.scale(ad.tsum(ad.square(ad.sub(u_true, u_f))), beta2 / batch)
    if u_c is None:
        return term_f
    term_c = ad.scale(ad.tsum(ad.square(ad.sub(u_true, u_c))), beta1 / batch)
    return ad.add(term_c, term_f)


def hermitian_layer(r0: np.ndarray) -> np.ndarray:
    """Complex-matrix form of the output layer: R0 + R0^H (exactly Hermitian)."""
    r0 = np.asarray(r0, dtype=complex)
    if r0.ndim != 2 or r0.shape[0] != r0.shape[1]:
        raise ValueError("hermitian layer expects a square matrix")
    return r0 + r0.conj().T


def identity_dense(n: int) -> Dense:
    return Dense(W=np.eye(n), b=np.zeros(n), activation="linear")


def linear_dense(matrix: np.ndarray) -> Dense:
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    return Dense(W=matrix, b=np.zeros(matrix.shape[0]), activation="linear")


def rk4_emulator(n: int, step_matrix: np.ndarray) -> AdenParams:
    """Linear fine stage reproducing one classic RK4 step for dx/dt = A x.

    f0 and f5 are identities, every K subnet multiplies by h*A, and the
    tableau coefficients stay at their classic initialization.
    """
    hA = np.atleast_2d(np.asarray(step_matrix, dtype=float))
    return AdenParams(
        task="channel",
        fine_kind="rk",
        coarse=None,
        f0=identity_dense(n),
        fk=[linear_dense(hA) for _ in range(4)],
        f5=identity_dense(n),
        rk_a=np.array(RK_A_INIT),
        rk_b=np.array(RK_B_INIT),
        n_t=n,
    )
