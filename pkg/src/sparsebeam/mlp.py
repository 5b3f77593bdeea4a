"""Feedforward selection network, trained from correlation-lag features.

Everything lives on numpy: Xavier-uniform init, ReLU hidden layers with
inverted dropout, a linear output head trained under mean squared error
against 0/1 selection masks, and ADAM with bias correction. The network
scores each grid location; a P-sensor configuration is read off as the
top-P scores. Feature standardization (per-feature mean/scale learned on the
training split) is stored inside the model so inference takes raw features.
"""

from __future__ import annotations

import csv
import json
import re
import struct
from dataclasses import dataclass, field, replace

import numpy as np

_MAGIC = b"MLPB"
_MAGIC_ENSEMBLE = b"MLPE"
_FORMAT = 1
_SCALE_FLOOR = 1e-12
_STRATUM_RE = re.compile(r"-L(\d+)-")

DEFAULT_HIDDEN = (450, 250, 80)


class TrainingDivergedError(RuntimeError):
    pass


def extract_features(r) -> np.ndarray:
    """Real feature vector of length 2N-1 from correlation lags.

    Accepts either the (N, N) correlation matrix (first row is used) or the
    length-N lag vector directly. Layout: real parts of lags 0..N-1, then
    imaginary parts of lags 1..N-1 (lag 0 is real for any Hermitian R).
    """
    r = np.asarray(r)
    lags = r[0, :] if r.ndim == 2 else r
    return np.concatenate([lags.real, lags[1:].imag])


@dataclass
class MlpModel:
    layer_sizes: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    feature_mean: np.ndarray | None = None
    feature_scale: np.ndarray | None = None
    # divide each example by its zero-lag power before standardizing; makes
    # the net see interference shape rather than absolute level
    normalize_power: bool = False

    @property
    def n_layers(self) -> int:
        return len(self.weights)


def init_model(layer_sizes, seed: int = 0) -> MlpModel:
    """Xavier-uniform weights (limit sqrt(6/(fan_in+fan_out))), zero biases.

    Weights are drawn layer by layer from np.random.default_rng(seed), so the
    full parameter set is pinned by (layer_sizes, seed).
    """
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2 or any(s < 1 for s in sizes):
        raise ValueError("layer_sizes needs >= 2 positive entries")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(layer_sizes=sizes, weights=weights, biases=biases)


@dataclass
class EnsembleModel:
    """Bag of identically shaped networks; scores are averaged at inference.

    Independent random restarts disagree mostly on scenarios near a decision
    boundary, so the averaged scores recover a few points of exact-match rate
    over any single member.
    """

    members: list[MlpModel]

    def __post_init__(self):
        if not self.members:
            raise ValueError("an ensemble needs at least one member")
        sizes = self.members[0].layer_sizes
        if any(m.layer_sizes != sizes for m in self.members):
            raise ValueError("ensemble members must share layer sizes")

    @property
    def layer_sizes(self) -> list[int]:
        return self.members[0].layer_sizes

    @property
    def n_members(self) -> int:
        return len(self.members)


def _normalize_power(x: np.ndarray) -> np.ndarray:
    lead = x[:, :1]
    denom = np.where(np.abs(lead) < _SCALE_FLOOR, 1.0, lead)
    return x / denom


def _standardize(model: MlpModel, x: np.ndarray) -> np.ndarray:
    if model.normalize_power:
        x = _normalize_power(x)
    if model.feature_mean is None:
        return x
    return (x - model.feature_mean) / model.feature_scale


def _forward_cached(model, x, keep_prob, rng, dropout_masks):
    """Forward pass keeping everything backprop needs.

    Dropout (inverted, applied after ReLU on hidden layers only) fires when
    keep_prob < 1 and either an rng or explicit 0/1 masks are supplied;
    explicit masks make the pass deterministic for gradient checks.
    """
    a = _standardize(model, np.atleast_2d(np.asarray(x, dtype=float)))
    acts = [a]
    pre = []
    masks = []
    last = model.n_layers - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = acts[-1] @ w + b
        pre.append(z)
        if i == last:
            acts.append(z)
            continue
        h = np.maximum(z, 0.0)
        mask = None
        if keep_prob < 1.0:
            if dropout_masks is not None:
                mask = np.asarray(dropout_masks[i], dtype=float)
            elif rng is not None:
                mask = (rng.random(h.shape) < keep_prob).astype(float)
        if mask is not None:
            h = h * mask / keep_prob
        masks.append(mask)
        acts.append(h)
    return acts, pre, masks


def forward(model, x, *, keep_prob: float = 1.0, rng=None,
            dropout_masks=None) -> np.ndarray:
    """Network scores for a batch of raw feature vectors, shape (B, n_out).

    Inference drops nothing; pass keep_prob < 1 with an rng (or fixed masks)
    to reproduce the training-time stochastic pass. An EnsembleModel returns
    the mean of its members' scores (inference only).
    """
    if isinstance(model, EnsembleModel):
        if keep_prob < 1.0 or rng is not None or dropout_masks is not None:
            raise ValueError("ensembles are inference-only; train members individually")
        return np.mean([forward(m, x) for m in model.members], axis=0)
    acts, _, _ = _forward_cached(model, x, keep_prob, rng, dropout_masks)
    out = acts[-1]
    return out[0] if np.asarray(x).ndim == 1 else out


def mse_loss_and_grads(model: MlpModel, x, y, *, keep_prob: float = 1.0,
                       rng=None, dropout_masks=None):
    """Loss (mean square error over batch x outputs) and parameter gradients.

    Returns (loss, grads) where grads = {"w": [...], "b": [...]} aligned with
    model.weights / model.biases.
    """
    y = np.atleast_2d(np.asarray(y, dtype=float))
    acts, pre, masks = _forward_cached(model, x, keep_prob, rng, dropout_masks)
    pred = acts[-1]
    if pred.shape != y.shape:
        raise ValueError(f"targets shape {y.shape} does not match output {pred.shape}")
    b_sz, n_out = pred.shape
    diff = pred - y
    loss = float(np.mean(diff * diff))

    grad_w = [None] * model.n_layers
    grad_b = [None] * model.n_layers
    dz = 2.0 * diff / (b_sz * n_out)
    for i in range(model.n_layers - 1, -1, -1):
        grad_w[i] = acts[i].T @ dz
        grad_b[i] = dz.sum(axis=0)
        if i == 0:
            break
        da = dz @ model.weights[i].T
        if masks[i - 1] is not None:
            da = da * masks[i - 1] / keep_prob
        dz = da * (pre[i - 1] > 0.0)
    return loss, {"w": grad_w, "b": grad_b}


@dataclass
class AdamState:
    """First/second moment accumulators plus the shared step counter."""

    m_w: list[np.ndarray]
    v_w: list[np.ndarray]
    m_b: list[np.ndarray]
    v_b: list[np.ndarray]
    t: int = 0


def adam_init(model: MlpModel) -> AdamState:
    return AdamState(
        m_w=[np.zeros_like(w) for w in model.weights],
        v_w=[np.zeros_like(w) for w in model.weights],
        m_b=[np.zeros_like(b) for b in model.biases],
        v_b=[np.zeros_like(b) for b in model.biases],
    )


def adam_step(model: MlpModel, grads, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """One in-place ADAM update with bias-corrected moment estimates."""
    state.t += 1
    c1 = 1.0 - beta1 ** state.t
    c2 = 1.0 - beta2 ** state.t
    for params, gs, ms, vs in ((model.weights, grads["w"], state.m_w, state.v_w),
                               (model.biases, grads["b"], state.m_b, state.v_b)):
        for i, g in enumerate(gs):
            ms[i] = beta1 * ms[i] + (1.0 - beta1) * g
            vs[i] = beta2 * vs[i] + (1.0 - beta2) * (g * g)
            params[i] -= lr * (ms[i] / c1) / (np.sqrt(vs[i] / c2) + eps)


@dataclass(frozen=True)
class TrainConfig:
    hidden_sizes: tuple[int, ...] = DEFAULT_HIDDEN
    learning_rate: float = 1e-3
    keep_prob: float = 0.9
    batch_size: int = 128
    max_epochs: int = 200
    patience: int = 20
    validation_fraction: float = 0.1
    standardize_features: bool = True
    normalize_power: bool = True
    rng_seed: int = 0
    # split_seed pins the train/validation split independently of rng_seed,
    # so metrics stay comparable when only the init/shuffle seed varies
    split_seed: int | None = None
    # checkpoint selection: "loss" keeps the lowest validation MSE epoch,
    # "selection" keeps the epoch with the highest exact top-P match rate
    monitor: str = "loss"

    def __post_init__(self):
        if not 0.0 < self.keep_prob <= 1.0:
            raise ValueError("keep_prob must be in (0, 1]")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must be in [0, 1)")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 0:
            raise ValueError("batch_size/max_epochs must be >= 1, patience >= 0")
        if self.monitor not in ("loss", "selection"):
            raise ValueError("monitor must be 'loss' or 'selection'")


@dataclass
class TrainResult:
    model: MlpModel
    train_losses: list[float] = field(default_factory=list)
    val_losses: list[float] = field(default_factory=list)
    best_epoch: int = -1
    stopped_early: bool = False


def _stratum_keys(scenario_ids):
    keys = []
    for sid in scenario_ids:
        m = _STRATUM_RE.search(sid)
        keys.append(m.group(1) if m else "")
    return keys


def split_train_validation(n: int, validation_fraction: float, rng,
                           scenario_ids=None):
    """Index split, stratified by the interferer-count tag in scenario ids.

    Ids shaped like "look60-L3-0017" contribute their L value as the stratum;
    ids without the tag fall into one shared stratum. Returns (train_idx,
    val_idx) as sorted integer arrays.
    """
    if validation_fraction == 0.0 or n < 2:
        return np.arange(n), np.arange(0)
    strata = {}
    keys = _stratum_keys(scenario_ids) if scenario_ids is not None else [""] * n
    for i, key in enumerate(keys):
        strata.setdefault(key, []).append(i)
    val = []
    for key in sorted(strata):
        idx = np.array(strata[key])
        perm = rng.permutation(len(idx))
        n_val = int(round(len(idx) * validation_fraction))
        n_val = min(n_val, len(idx) - 1)
        val.extend(idx[perm[:n_val]].tolist())
    val_idx = np.array(sorted(val), dtype=int)
    train_idx = np.setdiff1d(np.arange(n), val_idx)
    return train_idx, val_idx


def train(features, labels, cfg: TrainConfig | None = None,
          scenario_ids=None, initial_model: MlpModel | None = None) -> TrainResult:
    """Fit the selection network; early-stops on validation loss.

    features: (B, 2N-1) raw lag features; labels: (B, N) 0/1 masks. Keeps the
    parameters from the best validation epoch (train loss when there is no
    validation split). Raises TrainingDivergedError on non-finite loss.

    initial_model warm-starts from an existing model instead of a fresh
    Xavier init; its standardization stats are kept so the feature space
    stays consistent across phases.
    """
    cfg = cfg or TrainConfig()
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=float)
    if x.ndim != 2 or y.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ValueError("features and labels must be 2-D with matching rows")

    rng = np.random.default_rng(cfg.rng_seed)
    split_rng = rng if cfg.split_seed is None else np.random.default_rng(cfg.split_seed)
    train_idx, val_idx = split_train_validation(
        x.shape[0], cfg.validation_fraction, split_rng, scenario_ids)
    x_tr, y_tr = x[train_idx], y[train_idx]
    x_val, y_val = x[val_idx], y[val_idx]

    sizes = [x.shape[1], *cfg.hidden_sizes, y.shape[1]]
    if initial_model is not None:
        if (initial_model.layer_sizes[0] != sizes[0]
                or initial_model.layer_sizes[-1] != sizes[-1]):
            raise ValueError("initial_model layer sizes do not match the data")
        model = MlpModel(
            layer_sizes=list(initial_model.layer_sizes),
            weights=[w.copy() for w in initial_model.weights],
            biases=[b.copy() for b in initial_model.biases],
            feature_mean=None if initial_model.feature_mean is None
            else initial_model.feature_mean.copy(),
            feature_scale=None if initial_model.feature_scale is None
            else initial_model.feature_scale.copy(),
            normalize_power=initial_model.normalize_power)
    else:
        model = init_model(sizes, seed=cfg.rng_seed)
        model.normalize_power = cfg.normalize_power
        if cfg.standardize_features:
            base = _normalize_power(x_tr) if model.normalize_power else x_tr
            model.feature_mean = base.mean(axis=0)
            model.feature_scale = np.maximum(base.std(axis=0), _SCALE_FLOOR)

    state = adam_init(model)
    result = TrainResult(model=model)
    best = ((np.inf,), None)
    bad_epochs = 0
    n_tr = x_tr.shape[0]
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(n_tr)
        batch_losses = []
        for lo in range(0, n_tr, cfg.batch_size):
            sel = order[lo:lo + cfg.batch_size]
            loss, grads = mse_loss_and_grads(
                model, x_tr[sel], y_tr[sel], keep_prob=cfg.keep_prob, rng=rng)
            if not np.isfinite(loss):
                raise TrainingDivergedError(f"non-finite loss at epoch {epoch}")
            adam_step(model, grads, state, cfg.learning_rate)
            batch_losses.append(loss)
        train_loss = float(np.mean(batch_losses))
        result.train_losses.append(train_loss)

        if len(val_idx):
            pred = forward(model, x_val)
            val_loss = float(np.mean((pred - y_val) ** 2))
            result.val_losses.append(val_loss)
            if not np.isfinite(val_loss):
                raise TrainingDivergedError(
                    f"non-finite validation loss at epoch {epoch}")
            if cfg.monitor == "selection":
                p = int(round(float(y_val[0].sum())))
                chosen = predict_selection(model, x_val, p)
                acc = float((chosen == y_val).all(axis=1).mean())
                # exact-match first, validation loss breaks the ties the
                # coarse rate leaves behind
                monitor = (-acc, val_loss)
            else:
                monitor = (val_loss,)
        else:
            monitor = (train_loss,)

        if monitor < best[0]:
            best = (monitor, ([w.copy() for w in model.weights],
                              [b.copy() for b in model.biases]))
            result.best_epoch = epoch
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs > cfg.patience:
                result.stopped_early = True
                break

    if best[1] is not None:
        model.weights, model.biases = best[1]
    return result


@dataclass
class EnsembleResult:
    model: EnsembleModel
    members: list[TrainResult] = field(default_factory=list)


def train_ensemble(features, labels, cfg: TrainConfig | None = None,
                   n_members: int = 5, scenario_ids=None) -> EnsembleResult:
    """Independent restarts averaged into one scorer.

    Member i trains with rng_seed cfg.rng_seed + i; every member shares one
    train/validation split (cfg.split_seed, falling back to cfg.rng_seed) so
    all checkpoints are selected against the same held-out rows.
    """
    if n_members < 1:
        raise ValueError("n_members must be >= 1")
    cfg = cfg or TrainConfig()
    split_seed = cfg.split_seed if cfg.split_seed is not None else cfg.rng_seed
    members = []
    for i in range(n_members):
        member_cfg = replace(cfg, rng_seed=cfg.rng_seed + i, split_seed=split_seed)
        members.append(train(features, labels, member_cfg, scenario_ids=scenario_ids))
    return EnsembleResult(model=EnsembleModel([r.model for r in members]),
                          members=members)


def predict_selection(model, features, p: int) -> np.ndarray:
    """Top-P decode of network scores into a 0/1 mask (ties: lower index).

    2-D input gives one mask per row.
    """
    x = np.asarray(features, dtype=float)
    single = x.ndim == 1
    scores = np.atleast_2d(forward(model, x))
    n = scores.shape[1]
    if not 1 <= p <= n:
        raise ValueError(f"P must satisfy 1 <= P <= {n}")
    order = np.argsort(-scores, axis=1, kind="stable")
    masks = np.zeros(scores.shape, dtype=int)
    np.put_along_axis(masks, order[:, :p], 1, axis=1)
    return masks[0] if single else masks


def _write_single(fh, model: MlpModel) -> None:
    flags = (1 if model.feature_mean is not None else 0)
    flags |= (2 if model.normalize_power else 0)
    fh.write(struct.pack("<II", _FORMAT, len(model.layer_sizes)))
    fh.write(struct.pack(f"<{len(model.layer_sizes)}I", *model.layer_sizes))
    fh.write(struct.pack("<B", flags))
    for w, b in zip(model.weights, model.biases):
        fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())
    if model.feature_mean is not None:
        fh.write(np.ascontiguousarray(model.feature_mean, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(model.feature_scale, dtype="<f8").tobytes())


def _read_single(fh) -> MlpModel:
    fmt, n_sizes = struct.unpack("<II", fh.read(8))
    if fmt != _FORMAT:
        raise ValueError(f"unsupported model format {fmt}")
    sizes = list(struct.unpack(f"<{n_sizes}I", fh.read(4 * n_sizes)))
    (flags,) = struct.unpack("<B", fh.read(1))

    def read_array(shape):
        count = int(np.prod(shape))
        buf = fh.read(8 * count)
        if len(buf) != 8 * count:
            raise ValueError("model payload truncated")
        return np.frombuffer(buf, dtype="<f8").reshape(shape).copy()

    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(read_array((fan_in, fan_out)))
        biases.append(read_array((fan_out,)))
    mean = scale = None
    if flags & 1:
        mean = read_array((sizes[0],))
        scale = read_array((sizes[0],))
    return MlpModel(layer_sizes=sizes, weights=weights, biases=biases,
                    feature_mean=mean, feature_scale=scale,
                    normalize_power=bool(flags & 2))


def save_model(path, model) -> None:
    """Binary weights file plus a JSON sidecar (path + ".json").

    Single-network layout: magic, then format, layer count, layer sizes, a
    preprocessing flag byte (bit 0: standardized, bit 1: power-normalized),
    then float64 little-endian arrays: per layer W (row-major) and b, then
    feature mean and scale when present. An EnsembleModel uses its own magic
    followed by a member count and that many single-network blocks.
    """
    lead = model.members[0] if isinstance(model, EnsembleModel) else model
    with open(path, "wb") as fh:
        if isinstance(model, EnsembleModel):
            fh.write(_MAGIC_ENSEMBLE)
            fh.write(struct.pack("<I", model.n_members))
            for member in model.members:
                _write_single(fh, member)
        else:
            fh.write(_MAGIC)
            _write_single(fh, model)
    n_params = sum(w.size + b.size for w, b in zip(lead.weights, lead.biases))
    sidecar = {
        "format": _FORMAT,
        "layer_sizes": list(lead.layer_sizes),
        "standardized_features": lead.feature_mean is not None,
        "power_normalized": lead.normalize_power,
        "ensemble_members": model.n_members if isinstance(model, EnsembleModel) else 1,
        "parameters": int(n_params),
    }
    with open(str(path) + ".json", "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path):
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic == _MAGIC:
            return _read_single(fh)
        if magic == _MAGIC_ENSEMBLE:
            (count,) = struct.unpack("<I", fh.read(4))
            if not 1 <= count <= 4096:
                raise ValueError(f"implausible ensemble member count {count}")
            return EnsembleModel([_read_single(fh) for _ in range(count)])
    raise ValueError("not a model file")


@dataclass(frozen=True)
class LabeledExample:
    """One training row: lag features plus the best configuration's mask."""

    scenario_id: str
    look_doa_deg: float
    features: np.ndarray
    label_mask: np.ndarray


def write_dataset_csv(path, examples) -> None:
    """Dataset CSV: scenario_id, look_doa_deg, f_0..f_{2N-2}, label_mask_bits.

    Floats are written with repr so a read/write round trip is byte-stable.
    """
    if not examples:
        raise ValueError("refusing to write an empty dataset")
    n_feat = len(examples[0].features)
    header = ["scenario_id", "look_doa_deg"]
    header += [f"f_{i}" for i in range(n_feat)]
    header += ["label_mask_bits"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for ex in examples:
            if len(ex.features) != n_feat:
                raise ValueError("inconsistent feature lengths in dataset")
            row = [ex.scenario_id, repr(float(ex.look_doa_deg))]
            row += [repr(float(v)) for v in ex.features]
            row += ["".join(str(int(b)) for b in ex.label_mask)]
            writer.writerow(row)


def read_dataset_csv(path) -> list[LabeledExample]:
    examples = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        n_feat = len(header) - 3
        if n_feat < 1 or header[:2] != ["scenario_id", "look_doa_deg"] \
                or header[-1] != "label_mask_bits":
            raise ValueError("unrecognized dataset header")
        for row in reader:
            feats = np.array([float(v) for v in row[2:2 + n_feat]])
            mask = np.array([int(c) for c in row[-1]], dtype=int)
            examples.append(LabeledExample(
                scenario_id=row[0], look_doa_deg=float(row[1]),
                features=feats, label_mask=mask))
    return examples


def dataset_arrays(examples):
    """(features, labels, scenario_ids) stacked from labeled examples."""
    x = np.stack([ex.features for ex in examples])
    y = np.stack([ex.label_mask for ex in examples]).astype(float)
    sids = [ex.scenario_id for ex in examples]
    return x, y, sids
