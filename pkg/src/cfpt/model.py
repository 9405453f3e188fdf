"""Two-headed feed-forward predictor with hand-derived backpropagation.

A shared trunk of affine + rectifier layers feeds two heads: a sigmoid
classification head for the malignancy probability and an unbounded affine
regression head for the predicted cancer-free progression time. Training
minimizes the joint objective from :mod:`cfpt.losses` with Adam, a step
learning-rate decay, and selection of the parameter snapshot at the epoch
of minimum validation loss. Cross-validation is split at the patient
level so no patient's scans appear in more than one of train / validation
/ test within a fold.

Everything is plain float64 numpy; all randomness flows from explicit
seeds, so a (seed, config, data) triple fully determines every output.
"""

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .labels import ScanLabel
from .losses import LossConfig, Prediction, cel, crl, crl_grad
from .metrics import roc_auc

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int
    hidden_dims: tuple[int, ...] = (64, 64)
    activation: str = "relu"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.input_dim < 1:
            raise ValueError(f"input_dim must be >= 1, got {self.input_dim}")
        if any(h < 1 for h in self.hidden_dims):
            raise ValueError(f"hidden dims must be >= 1, got {self.hidden_dims}")
        if self.activation != "relu":
            raise ValueError("only the rectifier activation is supported")


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 120
    lr0: float = 1e-3
    lr_decay_factor: float = 0.4
    lr_decay_epochs: tuple[int, ...] = (40, 60, 80)
    weight_decay: float = 0.01
    batch_size: int = 32
    loss: LossConfig = field(default_factory=LossConfig)
    seed: int = 0
    init_reg_bias_to_mean: bool = True

    def __post_init__(self):
        object.__setattr__(
            self, "lr_decay_epochs", tuple(int(e) for e in self.lr_decay_epochs)
        )
        if self.max_epochs < 1:
            raise ValueError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if not 0 < self.lr_decay_factor < 1:
            raise ValueError(
                f"lr_decay_factor must lie in (0, 1), got {self.lr_decay_factor}"
            )
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass
class TrainHistory:
    train_loss: list[float]
    val_loss: list[float]
    val_auc: list[float]
    selected_epoch: int  # 1-based epoch whose snapshot was returned


@dataclass
class ScanDataset:
    """Per-scan features and labels, kept in parallel arrays."""

    scan_ids: list[str]
    patient_ids: list[str]
    features: np.ndarray  # (n_scans, input_dim)
    t_d: np.ndarray
    p: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        n = len(self.scan_ids)
        if not (
            len(self.patient_ids) == self.features.shape[0]
            == len(self.t_d) == len(self.p) == len(self.y) == n
        ):
            raise ValueError("ScanDataset arrays must have matching lengths")

    def __len__(self):
        return len(self.scan_ids)

    @property
    def input_dim(self) -> int:
        return self.features.shape[1]

    def patients(self) -> list[str]:
        """Unique patient ids, in first-appearance order."""
        seen = {}
        for pid in self.patient_ids:
            seen.setdefault(pid, None)
        return list(seen)

    def subset(self, indices) -> "ScanDataset":
        idx = list(indices)
        return ScanDataset(
            [self.scan_ids[i] for i in idx],
            [self.patient_ids[i] for i in idx],
            self.features[idx],
            self.t_d[idx],
            self.p[idx],
            self.y[idx],
        )

    def subset_patients(self, patient_set) -> "ScanDataset":
        keep = set(patient_set)
        return self.subset(
            [i for i, pid in enumerate(self.patient_ids) if pid in keep]
        )

    def labels(self) -> list[ScanLabel]:
        return [
            ScanLabel(s, pid, float(td), int(pp), int(yy), pp == 0)
            for s, pid, td, pp, yy in zip(
                self.scan_ids, self.patient_ids, self.t_d, self.p, self.y
            )
        ]


def build_dataset(labels: list[ScanLabel], features: dict) -> ScanDataset:
    """Assemble a :class:`ScanDataset` from labels and a scan_id -> feature
    vector mapping; label order is preserved."""
    missing = [lb.scan_id for lb in labels if lb.scan_id not in features]
    if missing:
        raise ValueError(f"features missing for scans: {missing[:5]}")
    mat = np.asarray([features[lb.scan_id] for lb in labels], dtype=np.float64)
    return ScanDataset(
        [lb.scan_id for lb in labels],
        [lb.patient_id for lb in labels],
        mat,
        np.array([lb.t_d for lb in labels], dtype=np.float64),
        np.array([lb.p for lb in labels], dtype=np.int64),
        np.array([lb.y for lb in labels], dtype=np.int64),
    )


# ---------------------------------------------------------------------------
# parameters, forward, backward


def init_params(cfg: ModelConfig, t_d_mean: float | None = None) -> dict:
    """Deterministic fan-in-scaled uniform initialization.

    Weights are drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases start
    at zero, except the regression-head bias which is set to ``t_d_mean``
    when given (skipping the long warm-up of an unbounded head).
    """
    rng = np.random.default_rng(cfg.seed)
    params = {}
    fan_in = cfg.input_dim
    for i, h in enumerate(cfg.hidden_dims):
        bound = 1.0 / np.sqrt(fan_in)
        params[f"W{i}"] = rng.uniform(-bound, bound, size=(fan_in, h))
        params[f"b{i}"] = np.zeros(h)
        fan_in = h
    bound = 1.0 / np.sqrt(fan_in)
    params["w_cls"] = rng.uniform(-bound, bound, size=fan_in)
    params["b_cls"] = np.zeros(1)
    params["w_reg"] = rng.uniform(-bound, bound, size=fan_in)
    params["b_reg"] = np.zeros(1) if t_d_mean is None else np.array([float(t_d_mean)])
    return params


def _n_hidden(params: dict) -> int:
    return sum(1 for k in params if k.startswith("W"))


def _forward_batch(params: dict, X: np.ndarray):
    """Trunk + heads over a batch; returns (y_hat, t_pred, logit, hiddens).

    ``hiddens[0]`` is the input, ``hiddens[l]`` the rectified output of
    trunk layer l; the last entry feeds both heads.
    """
    hiddens = [X]
    h = X
    for i in range(_n_hidden(params)):
        h = np.maximum(0.0, h @ params[f"W{i}"] + params[f"b{i}"])
        hiddens.append(h)
    logit = h @ params["w_cls"] + params["b_cls"][0]
    t_pred = h @ params["w_reg"] + params["b_reg"][0]
    return expit(logit), t_pred, logit, hiddens


def forward(params: dict, features) -> tuple[float, float]:
    """Single-scan forward pass: (malignancy probability, predicted CFPT)."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("forward expects a single feature vector")
    w0_key = "W0" if "W0" in params else "w_cls"
    if x.shape[0] != params[w0_key].shape[0]:
        raise ValueError(
            f"feature length {x.shape[0]} does not match input dim "
            f"{params[w0_key].shape[0]}"
        )
    y_hat, t_pred, _, _ = _forward_batch(params, x[None, :])
    return float(y_hat[0]), float(t_pred[0])


def _batch_loss_arrays(y_hat, t_pred, t_d, p, y, cfg: LossConfig) -> float:
    total = cfg.lam * crl(t_pred, t_d, p, cfg.epsilon) + cel(y_hat, y, cfg.prob_clamp)
    return float(np.mean(total))


def backward(params: dict, X: np.ndarray, t_d, p, y, loss_cfg: LossConfig):
    """Exact gradients of the mean joint loss over a batch.

    Returns ``(grads, batch_loss)`` where ``grads`` has the same keys and
    shapes as ``params``. The classification path uses the collapsed
    sigmoid/cross-entropy logit gradient; the regression path uses the
    closed-form censored-regression derivative.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("backward expects a non-empty 2-d feature batch")
    n = X.shape[0]
    y_hat, t_pred, logit, hiddens = _forward_batch(params, X)
    loss = _batch_loss_arrays(y_hat, t_pred, t_d, p, y, loss_cfg)

    d_logit = (expit(logit) - y) / n
    d_tpred = loss_cfg.lam * crl_grad(t_pred, t_d, p, loss_cfg.epsilon) / n

    h = hiddens[-1]
    grads = {
        "w_cls": h.T @ d_logit,
        "b_cls": np.array([d_logit.sum()]),
        "w_reg": h.T @ d_tpred,
        "b_reg": np.array([d_tpred.sum()]),
    }
    d_h = np.outer(d_logit, params["w_cls"]) + np.outer(d_tpred, params["w_reg"])
    for i in range(_n_hidden(params) - 1, -1, -1):
        dz = d_h * (hiddens[i + 1] > 0)
        grads[f"W{i}"] = hiddens[i].T @ dz
        grads[f"b{i}"] = dz.sum(axis=0)
        if i > 0:
            d_h = dz @ params[f"W{i}"].T
    return grads, loss


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    params: dict
    m: dict
    v: dict
    t: int = 0

    @classmethod
    def for_params(cls, params: dict) -> "AdamState":
        return cls(
            params=params,
            m={k: np.zeros_like(v) for k, v in params.items()},
            v={k: np.zeros_like(v) for k, v in params.items()},
        )


def adam_step(state: AdamState, grads: dict, lr: float, weight_decay: float) -> AdamState:
    """One Adam update (beta1 0.9, beta2 0.999, eps 1e-8, bias-corrected).

    Weight decay enters as a plain L2 gradient term (g += wd * param)
    before the moment updates. The state is updated in place and returned.
    """
    if set(grads) != set(state.params):
        raise ValueError("gradient keys do not match parameter keys")
    state.t += 1
    t = state.t
    for k, theta in state.params.items():
        g = grads[k]
        if g.shape != theta.shape:
            raise ValueError(f"gradient shape mismatch for {k!r}")
        if weight_decay != 0.0:
            g = g + weight_decay * theta
        state.m[k] = ADAM_BETA1 * state.m[k] + (1 - ADAM_BETA1) * g
        state.v[k] = ADAM_BETA2 * state.v[k] + (1 - ADAM_BETA2) * g * g
        m_hat = state.m[k] / (1 - ADAM_BETA1**t)
        v_hat = state.v[k] / (1 - ADAM_BETA2**t)
        theta -= lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    return state


def effective_lr(epoch: int, tcfg: TrainConfig) -> float:
    """Step-decayed learning rate at a 1-based epoch."""
    n_decays = sum(1 for d in tcfg.lr_decay_epochs if d <= epoch)
    return tcfg.lr0 * tcfg.lr_decay_factor**n_decays


# ---------------------------------------------------------------------------
# training and cross-validation


def _dataset_loss(params: dict, ds: ScanDataset, cfg: LossConfig) -> float:
    y_hat, t_pred, _, _ = _forward_batch(params, ds.features)
    return _batch_loss_arrays(y_hat, t_pred, ds.t_d, ds.p, ds.y, cfg)


def train(
    train_set: ScanDataset,
    val_set: ScanDataset,
    mcfg: ModelConfig,
    tcfg: TrainConfig,
) -> tuple[dict, TrainHistory]:
    """Mini-batch Adam with per-epoch reshuffling and step lr decay.

    Returns the parameter snapshot from the epoch of minimum validation
    loss (earliest epoch on ties) together with the full history.
    """
    if len(train_set) == 0 or len(val_set) == 0:
        raise ValueError("train and validation sets must be non-empty")
    overlap = set(train_set.patient_ids) & set(val_set.patient_ids)
    if overlap:
        raise ValueError(
            f"patients appear in both train and validation: {sorted(overlap)[:5]}"
        )
    if train_set.input_dim != mcfg.input_dim:
        raise ValueError(
            f"dataset feature dim {train_set.input_dim} != model input_dim {mcfg.input_dim}"
        )

    t_d_mean = float(np.mean(train_set.t_d)) if tcfg.init_reg_bias_to_mean else None
    params = init_params(mcfg, t_d_mean=t_d_mean)
    state = AdamState.for_params(params)
    rng = np.random.default_rng(tcfg.seed)
    n = len(train_set)

    history = TrainHistory([], [], [], 0)
    best_loss = np.inf
    best_params = {k: v.copy() for k, v in params.items()}
    best_epoch = 0

    for epoch in range(1, tcfg.max_epochs + 1):
        lr = effective_lr(epoch, tcfg)
        order = rng.permutation(n)
        loss_sum = 0.0
        for start in range(0, n, tcfg.batch_size):
            idx = order[start : start + tcfg.batch_size]
            grads, loss = backward(
                params,
                train_set.features[idx],
                train_set.t_d[idx],
                train_set.p[idx],
                train_set.y[idx],
                tcfg.loss,
            )
            adam_step(state, grads, lr, tcfg.weight_decay)
            loss_sum += loss * len(idx)
        history.train_loss.append(loss_sum / n)

        val_loss = _dataset_loss(params, val_set, tcfg.loss)
        history.val_loss.append(val_loss)
        y_hat_val, _, _, _ = _forward_batch(params, val_set.features)
        try:
            auc, _ = roc_auc(y_hat_val, val_set.y)
        except ValueError:  # single-class validation split
            auc = float("nan")
        history.val_auc.append(auc)

        if val_loss < best_loss:
            best_loss = val_loss
            best_params = {k: v.copy() for k, v in params.items()}
            best_epoch = epoch

    history.selected_epoch = best_epoch
    return best_params, history


def predict(params: dict, dataset: ScanDataset) -> list[Prediction]:
    """Forward pass over every scan, in dataset order."""
    if len(dataset) == 0:
        return []
    y_hat, t_pred, _, _ = _forward_batch(params, dataset.features)
    return [
        Prediction(sid, float(yh), float(tp))
        for sid, yh, tp in zip(dataset.scan_ids, y_hat, t_pred)
    ]


@dataclass(frozen=True)
class FoldAssignment:
    fold: int
    train: tuple[str, ...]
    val: tuple[str, ...]
    test: tuple[str, ...]


def crossval_split(
    patients: list[str], k: int, seed: int, train_val_ratio: float = 3.0
) -> list[FoldAssignment]:
    """Random equal partition of patients into k test folds.

    Within each fold the remaining patients are split train:val at
    ``train_val_ratio`` : 1 (3:1 by default). Every patient lands in
    exactly one test fold; within a fold the three groups are disjoint by
    construction.
    """
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if len(patients) < k:
        raise ValueError(f"need at least {k} patients for {k} folds, got {len(patients)}")
    if len(set(patients)) != len(patients):
        raise ValueError("patient ids must be unique")

    rng = np.random.default_rng(seed)
    shuffled = [patients[i] for i in rng.permutation(len(patients))]
    folds = [list(part) for part in np.array_split(np.array(shuffled, dtype=object), k)]

    out = []
    for i, test in enumerate(folds):
        rest = [pid for j, f in enumerate(folds) if j != i for pid in f]
        perm = rng.permutation(len(rest))
        rest = [rest[j] for j in perm]
        n_val = max(1, round(len(rest) / (1.0 + train_val_ratio)))
        val = rest[:n_val]
        tr = rest[n_val:]
        if not tr:
            raise ValueError("fold leaves an empty training set; need more patients")
        out.append(FoldAssignment(i, tuple(tr), tuple(val), tuple(test)))
    return out


def fold_seed(seed: int, fold: int) -> int:
    """Stable per-fold RNG seed derived from (seed, fold index)."""
    ss = np.random.SeedSequence((int(seed), int(fold)))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass
class CrossvalResult:
    predictions: list[Prediction]  # pooled, each scan exactly once
    prediction_folds: list[int]  # test fold of each pooled prediction
    folds: list[FoldAssignment]
    histories: list[TrainHistory]


def run_crossval(
    dataset: ScanDataset, mcfg: ModelConfig, tcfg: TrainConfig, k: int = 5
) -> CrossvalResult:
    """Train one model per fold and pool the held-out predictions.

    Each scan is predicted exactly once, by the model whose training and
    validation never saw its patient. Per-fold training uses independent
    seeds derived from (config seed, fold index).
    """
    assignments = crossval_split(dataset.patients(), k, tcfg.seed)
    predictions: list[Prediction] = []
    prediction_folds: list[int] = []
    histories = []
    for fa in assignments:
        train_ds = dataset.subset_patients(fa.train)
        val_ds = dataset.subset_patients(fa.val)
        test_ds = dataset.subset_patients(fa.test)
        fold_mcfg = ModelConfig(
            mcfg.input_dim, mcfg.hidden_dims, mcfg.activation,
            seed=fold_seed(mcfg.seed, fa.fold),
        )
        fold_tcfg = TrainConfig(
            tcfg.max_epochs, tcfg.lr0, tcfg.lr_decay_factor, tcfg.lr_decay_epochs,
            tcfg.weight_decay, tcfg.batch_size, tcfg.loss,
            seed=fold_seed(tcfg.seed, fa.fold),
            init_reg_bias_to_mean=tcfg.init_reg_bias_to_mean,
        )
        params, history = train(train_ds, val_ds, fold_mcfg, fold_tcfg)
        preds = predict(params, test_ds)
        predictions.extend(preds)
        prediction_folds.extend([fa.fold] * len(preds))
        histories.append(history)
    return CrossvalResult(predictions, prediction_folds, assignments, histories)


# ---------------------------------------------------------------------------
# parameter snapshots


def config_hash(mcfg: ModelConfig) -> str:
    blob = json.dumps(
        {
            "input_dim": mcfg.input_dim,
            "hidden_dims": list(mcfg.hidden_dims),
            "activation": mcfg.activation,
        },
        sort_keys=True,
    )
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def save_params(path, params: dict, mcfg: ModelConfig, seed: int | None = None) -> None:
    """Write a flat binary snapshot with a JSON header (config hash, seed)."""
    header = json.dumps(
        {"config_hash": config_hash(mcfg), "seed": mcfg.seed if seed is None else seed}
    )
    np.savez(path, __header__=np.array(header), **params)


def load_params(path) -> tuple[dict, dict]:
    """Read a snapshot back; returns (params, header metadata)."""
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["__header__"]))
        params = {k: data[k].copy() for k in data.files if k != "__header__"}
    return params, meta
