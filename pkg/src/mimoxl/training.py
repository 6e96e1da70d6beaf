"""Joint training of the selection and extrapolation networks.

One training step records the whole computation on a fresh tape: selection
forward (hard mask emitted, soft stand-in differentiated), real/imaginary
packing and masking, extrapolator forward, combined loss
``L_sel + rho * L_ext`` and a reverse sweep feeding one Adam update of all
trainable parameters.  Four schemes are supported: learned or uniform
selection crossed with the Runge-Kutta or plain dense fine stage.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .channel import ChannelSample, CovarianceSample, Scene, dataset_signal_power
from .codebook import build_codebook
from .extrapolation import AdenParams, aden_graph, aden_penalty_graph, init_aden_params
from .geometry import ArrayGeometry
from .optim import AdamState, adam_step
from .selection import (
    AsnParams,
    asn_graph,
    asn_penalty_graph,
    init_asn_params,
    selected_indices,
    uniform_pattern,
)

TASKS = ("channel", "beam", "ccm")
SCHEMES = ("asn_aden", "asn_dnn", "uniform_aden", "uniform_dnn")


class TrainingDiverged(RuntimeError):
    """Raised when a loss stops being finite; carries the partial history."""

    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


@dataclass
class LossWeights:
    alpha1: float = 1.0
    alpha2: float = 1.0
    beta1: float = 1.0
    beta2: float = 10.0
    rho0: float = 5.0
    rho_factor: float = 5.0
    rho_cap: float = 5.0**8

    def __post_init__(self):
        for name in ("alpha1", "alpha2", "beta1", "beta2", "rho0", "rho_factor"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.rho_cap < self.rho0:
            raise ValueError("rho_cap must be >= rho0")


@dataclass
class ExperimentConfig:
    task: str = "channel"
    scheme: str = "asn_aden"
    m_t: int = 4
    geom: ArrayGeometry = field(default_factory=ArrayGeometry)
    scene: Scene = field(default_factory=Scene)
    weights: LossWeights = field(default_factory=LossWeights)
    oversampling: int = 1
    aden_width: int | None = None
    asn_width: int | None = None
    asn_layers: int = 3
    lr: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 64
    epochs: int = 30
    split_fraction: float = 0.8
    seed: int = 0
    snr_db: float | None = None
    block_rows: int = 16
    block_cols: int = 16

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if not 0.0 < self.split_fraction < 1.0:
            raise ValueError("split fraction must lie in (0, 1)")
        if not 1 <= self.m_t < self.geom.n_t:
            raise ValueError("need 1 <= M_t < N_t")
        if self.snr_db is not None and self.task == "ccm":
            raise ValueError("input corruption is defined for channel/beam tasks only")

    @property
    def uses_asn(self) -> bool:
        return self.scheme.startswith("asn")

    @property
    def fine_kind(self) -> str:
        return "rk" if self.scheme.endswith("aden") else "plain"


@dataclass
class TrainHistory:
    epochs: list = field(default_factory=list)
    rho: list = field(default_factory=list)
    loss_total: list = field(default_factory=list)
    loss_asn: list = field(default_factory=list)
    loss_aden: list = field(default_factory=list)
    metric: list = field(default_factory=list)
    s_indices: list = field(default_factory=list)
    final_metric: float = float("nan")
    final_soft: np.ndarray | None = None
    train_indices: np.ndarray | None = None
    holdout_indices: np.ndarray | None = None


# ---------------------------------------------------------------------------
# packing and expansion


def pack_real_imag(u: np.ndarray) -> np.ndarray:
    """Stack real parts over imaginary parts; matrices are flattened row-major."""
    u = np.asarray(u)
    if not np.all(np.isfinite(u)):
        raise ValueError("cannot pack non-finite values")
    return np.concatenate([np.real(u).ravel(), np.imag(u).ravel()]).astype(float)


def unpack_vector(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.shape[0] % 2:
        raise ValueError("packed vectors have even length")
    n = p.shape[0] // 2
    return p[:n] + 1j * p[n:]


def unpack_matrix(p: np.ndarray, n: int) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.shape != (2 * n * n,):
        raise ValueError("packed matrix has wrong length")
    return p[: n * n].reshape(n, n) + 1j * p[n * n :].reshape(n, n)


def expand_selection_vector(s: np.ndarray) -> np.ndarray:
    """Duplicate the mask over the real and imaginary halves."""
    s = np.asarray(s, dtype=float)
    return np.concatenate([s, s])


def expand_selection_matrix(s: np.ndarray) -> np.ndarray:
    """Outer-product mask stacked twice along the rows for packed matrices."""
    s = np.asarray(s, dtype=float)
    S = np.outer(s, s)
    return np.vstack([S, S])


# ---------------------------------------------------------------------------
# metrics


def nmse(u_true, u_hat) -> float:
    """sum |u - u_hat|^2 / sum |u|^2 over an evaluation set."""
    if len(u_true) != len(u_hat):
        raise ValueError("nmse needs equally many truths and estimates")
    num = 0.0
    den = 0.0
    for u, v in zip(u_true, u_hat):
        u = np.asarray(u)
        v = np.asarray(v)
        if u.shape != v.shape:
            raise ValueError("nmse shape mismatch")
        num += float(np.sum(np.abs(u - v) ** 2))
        den += float(np.sum(np.abs(u) ** 2))
    if den == 0.0:
        raise ValueError("nmse undefined for all-zero truths")
    return num / den


def beam_accuracy(pred, truth) -> float:
    pred = np.asarray(pred, dtype=int)
    truth = np.asarray(truth, dtype=int)
    if pred.shape != truth.shape:
        raise ValueError("prediction/truth length mismatch")
    if pred.size == 0:
        raise ValueError("empty prediction set")
    return float(np.mean(pred == truth))


def rho_schedule(epoch: int, w: LossWeights) -> float:
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return float(min(w.rho0 * w.rho_factor**epoch, w.rho_cap))


# ---------------------------------------------------------------------------
# dataset plumbing


def packed_inputs(dataset, task: str) -> np.ndarray:
    """Column-per-sample packed input matrix for the given task."""
    if task in ("channel", "beam"):
        cols = [pack_real_imag(s.h) for s in dataset]
    elif task == "ccm":
        cols = [pack_real_imag(s.R) for s in dataset]
    else:
        raise ValueError(f"unknown task {task!r}")
    return np.column_stack(cols)


def beam_labels(dataset) -> np.ndarray:
    return np.array([s.beam_label for s in dataset], dtype=int)


def _mask_graph(tape, config, hard_node):
    """Expand the selection node to the packed-input layout."""
    if config.task == "ccm":
        return ad.tile2(ad.outer_self(hard_node))
    return ad.tile2(hard_node)


def build_step_graph(tape, config: ExperimentConfig, asn_params, fixed_s, aden_params, x_batch, targets, x_target=None):
    """Record one full training step on ``tape``.

    ``x_batch`` feeds the network (possibly noise-corrupted); ``x_target``
    is the clean reconstruction label and defaults to ``x_batch``.  Returns
    a dict with the loss nodes, the selection state and the parameter
    leaves (selection leaves first, extrapolator leaves after).
    """
    w = config.weights
    batch = x_batch.shape[1]
    if x_target is None:
        x_target = x_batch
    if config.uses_asn:
        state, soft, hard_node, asn_leaves = asn_graph(tape, asn_params, config.m_t)
        loss_asn = asn_penalty_graph(soft, config.m_t, w.alpha1, w.alpha2)
        mask = _mask_graph(tape, config, hard_node)
    else:
        state = None
        soft = None
        asn_leaves = []
        loss_asn = None
        mask = _mask_graph(tape, config, tape.constant(fixed_s))

    z_in = tape.constant(x_batch)
    z_s = ad.mul_colvec(z_in, mask)
    u_c, u_f, aden_leaves = aden_graph(tape, aden_params, z_s)

    if config.task == "beam":
        loss_aden = ad.scale(ad.cross_entropy(u_f, targets), w.beta2)
    else:
        u_true = tape.constant(x_target)
        loss_aden = aden_penalty_graph(u_true, u_c, u_f, w.beta1, w.beta2, batch=batch)

    return {
        "state": state,
        "soft": soft,
        "loss_asn": loss_asn,
        "loss_aden": loss_aden,
        "asn_leaves": asn_leaves,
        "aden_leaves": aden_leaves,
        "u_c": u_c,
        "u_f": u_f,
        "z_s": z_s,
        "mask": mask,
    }


def _forward_masked(config, aden_params, s, x) -> np.ndarray:
    """Inference with the selection network deleted and the mask frozen."""
    tape = ad.Tape()
    mask = _mask_graph(tape, config, tape.constant(s))
    z_s = ad.mul_colvec(tape.constant(x), mask)
    _, u_f, _ = aden_graph(tape, aden_params, z_s)
    return u_f.value.copy()


def evaluate(config: ExperimentConfig, aden_params: AdenParams, s: np.ndarray, dataset, indices, inputs=None) -> float:
    """Holdout metric: NMSE for channel/ccm, accuracy for beams.

    ``inputs`` optionally overrides the packed network inputs (column per
    dataset sample, e.g. the noise-corrupted copies); labels stay clean.
    """
    indices = np.asarray(indices, dtype=int)
    subset = [dataset[i] for i in indices]
    x_clean = packed_inputs(subset, config.task)
    x = x_clean if inputs is None else inputs[:, indices]
    out = _forward_masked(config, aden_params, s, x)
    if config.task == "beam":
        return beam_accuracy(np.argmax(out, axis=0), beam_labels(subset))
    truths = [x_clean[:, i] for i in range(x_clean.shape[1])]
    estimates = [out[:, i] for i in range(out.shape[1])]
    return nmse(truths, estimates)


def _corrupt_inputs(x: np.ndarray, snr_db: float, rng: np.random.Generator) -> np.ndarray:
    """Additive packed-domain noise at the configured SNR (identity pilot).

    The packed layout splits CN(0, sigma2) noise into two real halves of
    variance sigma2/2 each, matching ``observe`` with P = I.
    """
    power = float(np.mean(np.sum(x**2, axis=0)) / (x.shape[0] / 2))
    sigma2 = power * 10.0 ** (-snr_db / 10.0)
    return x + np.sqrt(sigma2 / 2.0) * rng.standard_normal(x.shape)


def joint_train(dataset, config: ExperimentConfig):
    """Run the joint training loop; returns (asn, aden, s, history).

    ``asn`` is None for uniform schemes.  The history carries per-epoch
    losses, the evolving mask and the holdout metric; training and holdout
    index sets are disjoint by construction and re-asserted here.
    """
    if not dataset:
        raise ValueError("dataset must be nonempty")
    rng = np.random.default_rng(config.seed)
    n = len(dataset)
    perm = rng.permutation(n)
    n_train = max(1, int(round(config.split_fraction * n)))
    if n_train >= n:
        n_train = n - 1 if n > 1 else 1
    train_idx = perm[:n_train]
    hold_idx = perm[n_train:]
    if np.intersect1d(train_idx, hold_idx).size:
        raise AssertionError("train/holdout leakage")

    n_t = config.geom.n_t
    x_all = packed_inputs(dataset, config.task)
    targets_all = beam_labels(dataset) if config.task == "beam" else None
    x_in = x_all
    if config.snr_db is not None:
        x_in = _corrupt_inputs(x_all, config.snr_db, rng)

    n_beams = None
    if config.task == "beam":
        n_beams = len(build_codebook(config.geom, config.oversampling))

    asn_params = None
    fixed_s = None
    if config.uses_asn:
        asn_params = init_asn_params(n_t, rng, n_layers=config.asn_layers, width=config.asn_width)
    else:
        fixed_s = uniform_pattern(n_t, config.m_t)

    aden_params = init_aden_params(
        n_t,
        config.task,
        rng,
        width=config.aden_width,
        n_beams=n_beams,
        fine_kind=config.fine_kind,
    )

    flat = (asn_params.flat_params() if asn_params else []) + aden_params.flat_params()
    n_asn = len(asn_params.flat_params()) if asn_params else 0
    state = AdamState.for_params(flat, lr=config.lr, beta1=config.adam_beta1, beta2=config.adam_beta2, eps=config.adam_eps)

    history = TrainHistory(train_indices=train_idx.copy(), holdout_indices=hold_idx.copy())
    current_s = fixed_s
    current_soft = None

    for epoch in range(config.epochs):
        rho = rho_schedule(epoch, config.weights)
        order = train_idx[rng.permutation(n_train)]
        sum_asn = sum_aden = sum_total = 0.0
        n_batches = 0
        for start in range(0, n_train, config.batch_size):
            batch_idx = order[start : start + config.batch_size]
            xb = x_in[:, batch_idx]
            if config.task == "beam":
                tb = targets_all[batch_idx]
            else:
                tb = None
            xt = x_all[:, batch_idx] if config.snr_db is not None else None
            tape = ad.Tape()
            graph = build_step_graph(tape, config, asn_params, fixed_s, aden_params, xb, tb, x_target=xt)
            loss_aden = graph["loss_aden"]
            if graph["loss_asn"] is not None:
                total = ad.add(graph["loss_asn"], ad.scale(loss_aden, rho))
                l_asn = float(graph["loss_asn"].value)
            else:
                total = ad.scale(loss_aden, rho)
                l_asn = 0.0
            if not np.isfinite(total.value):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}", history)
            ad.backward(total)
            leaves = graph["asn_leaves"] + graph["aden_leaves"]
            grads = [leaf.grad if leaf.grad is not None else np.zeros_like(leaf.value) for leaf in leaves]
            flat = adam_step(flat, grads, state)
            if asn_params:
                asn_params.set_flat_params(flat[:n_asn])
            aden_params.set_flat_params(flat[n_asn:])
            if graph["state"] is not None:
                current_s = graph["state"].hard
                current_soft = graph["state"].soft
            sum_asn += l_asn
            sum_aden += float(loss_aden.value)
            sum_total += float(total.value)
            n_batches += 1

        metric = evaluate(config, aden_params, current_s, dataset, hold_idx,
                          inputs=x_in if config.snr_db is not None else None)
        history.epochs.append(epoch)
        history.rho.append(rho)
        history.loss_asn.append(sum_asn / n_batches)
        history.loss_aden.append(sum_aden / n_batches)
        history.loss_total.append(sum_total / n_batches)
        history.metric.append(metric)
        history.s_indices.append(selected_indices(current_s).tolist())
        if not all(np.isfinite(v) for v in (history.loss_total[-1], metric)):
            raise TrainingDiverged(f"non-finite record at epoch {epoch}", history)

    history.final_metric = evaluate(config, aden_params, current_s, dataset, hold_idx,
                                    inputs=x_in if config.snr_db is not None else None)
    history.final_soft = None if current_soft is None else current_soft.copy()
    return asn_params, aden_params, current_s, history


def generate_task_dataset(config: ExperimentConfig):
    """Scene-derived dataset for the configured task (with beam labels)."""
    if config.task == "ccm":
        from .channel import collection_blocks

        return collection_blocks(config.scene, config.geom, config.block_rows, config.block_cols)
    cb = build_codebook(config.geom, config.oversampling)
    from .channel import generate_scene_dataset

    return generate_scene_dataset(config.scene, config.geom, codebook=cb)


def seed_sweep(config: ExperimentConfig, seeds) -> dict:
    """Repeat training across seeds; returns rows plus the metric variance."""
    seeds = list(seeds)
    if len(seeds) < 2:
        raise ValueError("a sweep needs at least two seeds")
    dataset = generate_task_dataset(config)
    rows = []
    for seed in seeds:
        cfg = replace(config, seed=int(seed))
        _, _, s, history = joint_train(dataset, cfg)
        rows.append(
            {
                "seed": int(seed),
                "metric": history.final_metric,
                "selected": selected_indices(s).tolist(),
            }
        )
    metrics = np.array([r["metric"] for r in rows])
    return {"rows": rows, "variance": float(np.var(metrics)), "mean": float(np.mean(metrics))}
