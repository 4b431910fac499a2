"""Training: unified loss, Adam, minibatching, checkpoints, configuration.

The loss per batch is the mean prediction cross-entropy plus a weighted
leave-one-out smoothness term plus a global squared-norm penalty.  Batches
group rows of a single user, since the weighted adjacency is user-specific.
All randomness is derived from (seed, epoch) so runs replay bitwise and
training can resume from a checkpoint without drift.
"""

import json
import struct
from dataclasses import dataclass, field, asdict

import numpy as np

from kgrec import evaluate, gnn
from kgrec.errors import CheckpointError, DimensionError, KgrecError, TrainingDiverged

CONFIG_KEYS = {
    "S": int, "d": int, "L": int, "lambda": float, "gamma": float,
    "eta": float, "batch_size": int, "epochs": int, "seed": int, "K": int,
    "threshold": float,
}


@dataclass
class HyperParams:
    S: int = 4
    d: int = 8
    L: int = 1
    lambda_: float = 0.5
    gamma: float = 1e-7
    eta: float = 2e-2
    batch_size: int = 64
    epochs: int = 10
    seed: int = 42
    K: int = None
    threshold: float = None

    def __post_init__(self):
        if self.S < 1:
            raise ValueError("S must be >= 1")
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if not 1 <= self.L <= 4:
            raise ValueError("L must be in 1..4")
        if self.lambda_ < 0 or self.gamma < 0:
            raise ValueError("lambda and gamma must be >= 0")
        if self.eta < 0:
            raise ValueError("eta must be nonnegative")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size >= 1 and epochs >= 0 required")

    @property
    def unroll_steps(self):
        return self.K if self.K is not None else self.L + 2

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def parse_config(path):
    """key=value lines; '#' starts a comment; keys follow the CLI flags."""
    out = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise KgrecError(f"{path}:{lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in CONFIG_KEYS:
                raise KgrecError(f"{path}:{lineno}: unknown key '{key}'")
            out[key] = CONFIG_KEYS[key](value)
    return out


def hyperparams_from(config=None, **overrides):
    """HyperParams from an optional config dict overlaid with CLI values."""
    merged = dict(config or {})
    for key, val in overrides.items():
        if val is not None:
            merged[key] = val
    if "lambda" in merged:
        merged["lambda_"] = merged.pop("lambda")
    return HyperParams(**merged)


@dataclass
class LossBreakdown:
    total: float
    prediction: float
    smoothness: float
    l2: float


@dataclass
class AdamState:
    """Bias-corrected Adam accumulators, one slot per parameter tensor."""

    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    BETA1 = 0.9
    BETA2 = 0.999
    EPS = 1e-8

    @classmethod
    def zeros(cls, params):
        state = cls()
        for name, t in params.named_tensors():
            state.m[name] = np.zeros_like(t)
            state.v[name] = np.zeros_like(t)
        return state


def adam_step(params, grads, state, eta):
    """Standard bias-corrected Adam update, in place."""
    state.step += 1
    t = state.step
    b1, b2, eps = AdamState.BETA1, AdamState.BETA2, AdamState.EPS
    grad_map = dict(grads.named_tensors())
    for name, theta in params.named_tensors():
        g = grad_map[name]
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * (g * g)
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        theta -= eta * m_hat / (np.sqrt(v_hat) + eps)


def unified_loss(batch, params, hp, kg, with_grads=True):
    """Loss and gradients for one batch.

    loss = mean prediction cross-entropy + lambda * leave-one-out term
         + gamma * squared norm of all parameters.
    Raises on a non-finite value, naming the offending term.
    """
    cache = gnn.batch_forward(kg, batch, params, hp.unroll_steps,
                              with_ls=hp.lambda_ > 0)
    l2 = params.squared_norm()
    parts = LossBreakdown(
        total=cache.pred_loss + hp.lambda_ * cache.ls_loss + hp.gamma * l2,
        prediction=cache.pred_loss, smoothness=cache.ls_loss, l2=l2)
    for term in ("prediction", "smoothness", "l2"):
        if not np.isfinite(getattr(parts, term)):
            raise TrainingDiverged(f"non-finite {term} term in loss")
    if not with_grads:
        return parts, None
    grads = gnn.batch_backward(kg, cache, params, ls_weight=hp.lambda_)
    if hp.gamma:
        two_gamma = 2.0 * hp.gamma
        grads.user_emb += two_gamma * params.user_emb
        grads.rel_emb += two_gamma * params.rel_emb
        grads.entity_feat += two_gamma * params.entity_feat
        for gw, w in zip(grads.weights, params.weights):
            gw += two_gamma * w
    return parts, grads


def _user_batches(matrix, batch_size, rng):
    """Shuffle users and each user's rows, then chunk per user."""
    by_user = {}
    for u, it, y in zip(matrix.users, matrix.items, matrix.labels):
        by_user.setdefault(int(u), []).append((int(it), int(y)))
    users = sorted(by_user)
    order = rng.permutation(len(users))
    batches = []
    for k in order:
        u = users[k]
        rows = by_user[u]
        perm = rng.permutation(len(rows))
        for lo in range(0, len(rows), batch_size):
            sel = perm[lo:lo + batch_size]
            items = np.asarray([rows[i][0] for i in sel], dtype=np.int64)
            labels = np.asarray([rows[i][1] for i in sel], dtype=np.float64)
            batches.append((u, items, labels))
    return batches


@dataclass
class TrainResult:
    params: gnn.ModelParams
    metrics: list                # dicts: epoch, train_loss, val_auc, val_r10
    best_epoch: int
    best_r10: float


def train(split, kg, hp, resume_from=None, checkpoint_path=None):
    """Shuffled minibatch Adam over the train split.

    Logs train loss, validation AUC and Recall@10 per epoch and returns the
    parameters of the best-validation-Recall@10 epoch.  A non-finite loss
    aborts with the last finite epoch's parameters attached to the error.
    `resume_from` continues from a saved (params, adam, epoch) checkpoint and
    replays exactly the run that produced it.
    """
    if resume_from is not None:
        params, adam, loaded_hp, start_epoch = checkpoint_load(
            resume_from, expected_hp=hp)
        metrics = []
    else:
        rng_init = np.random.default_rng([hp.seed, 0])
        params = gnn.init_params(split.train.n_users, kg.n_relations,
                                 kg.n_entities, hp.d, hp.L, rng_init)
        adam = AdamState.zeros(params)
        start_epoch = 0
        metrics = []

    train_rows = split.train.rows_by_user()
    train_pos = split.train.positives_by_user()
    valid_pos = split.valid.positives_by_user()

    best_epoch, best_r10, best_params = -1, -np.inf, params.copy()
    last_good = params.copy()

    for epoch in range(start_epoch + 1, hp.epochs + 1):
        rng_epoch = np.random.default_rng([hp.seed, 1, epoch])
        total_loss, total_rows = 0.0, 0
        try:
            for user, items, labels in _user_batches(split.train,
                                                     hp.batch_size, rng_epoch):
                batch = gnn.make_batch(kg, user, items, labels,
                                       *train_rows[user], hp.S, hp.L, rng_epoch)
                parts, grads = unified_loss(batch, params, hp, kg)
                adam_step(params, grads, adam, hp.eta)
                total_loss += parts.total * len(items)
                total_rows += len(items)
        except TrainingDiverged as exc:
            exc.params = last_good
            exc.epoch = epoch - 1
            raise
        train_loss = total_loss / max(total_rows, 1)

        rng_eval = np.random.default_rng([hp.seed, 2, epoch])
        val_auc = evaluate.ctr_auc(kg, params, hp, split.valid, rng_eval)
        val_r10 = evaluate.mean_recall(kg, params, hp, valid_pos, train_pos,
                                       rng_eval, k=10)
        metrics.append({"epoch": epoch, "train_loss": train_loss,
                        "val_auc": val_auc, "val_r10": val_r10})
        last_good = params.copy()
        if val_r10 > best_r10:
            best_epoch, best_r10 = epoch, val_r10
            best_params = params.copy()
        if checkpoint_path is not None:
            checkpoint_save(checkpoint_path, params, adam, hp, epoch)

    return TrainResult(params=best_params, metrics=metrics,
                       best_epoch=best_epoch, best_r10=best_r10)


def write_metrics_csv(metrics, path):
    with open(path, "w", encoding="utf-8") as f:
        f.write("epoch,train_loss,val_auc,val_r10\n")
        for row in metrics:
            f.write(f"{row['epoch']},{row['train_loss']:.17g},"
                    f"{row['val_auc']:.17g},{row['val_r10']:.17g}\n")


# checkpoint container: magic, version, json header (hyperparameters,
# shapes, epoch), then raw little-endian float64 tensors in header order.
_MAGIC = b"KGRECCP1"
_VERSION = 1


def checkpoint_save(path, params, adam, hp, epoch):
    tensors = list(params.named_tensors())
    if adam is not None:
        tensors += [(f"adam_m.{n}", t) for n, t in adam.m.items()]
        tensors += [(f"adam_v.{n}", t) for n, t in adam.v.items()]
    header = {
        "hp": hp.to_dict(),
        "epoch": epoch,
        "adam_step": None if adam is None else adam.step,
        "shapes": {name: list(t.shape) for name, t in tensors},
        "order": [name for name, _ in tensors],
    }
    blob = json.dumps(header).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<II", _VERSION, len(blob)))
        f.write(blob)
        for _, t in tensors:
            f.write(np.ascontiguousarray(t, dtype="<f8").tobytes())


def checkpoint_load(path, expected_hp=None):
    """Returns (params, adam_state, hyperparams, epoch); bitwise inverse of save."""
    with open(path, "rb") as f:
        magic = f.read(len(_MAGIC))
        if magic != _MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file")
        head = f.read(8)
        if len(head) != 8:
            raise CheckpointError(f"{path}: truncated header")
        version, blob_len = struct.unpack("<II", head)
        if version != _VERSION:
            raise CheckpointError(f"{path}: unsupported version {version}")
        blob = f.read(blob_len)
        if len(blob) != blob_len:
            raise CheckpointError(f"{path}: truncated header")
        header = json.loads(blob.decode("utf-8"))
        arrays = {}
        for name in header["order"]:
            shape = tuple(header["shapes"][name])
            count = int(np.prod(shape)) if shape else 1
            raw = f.read(8 * count)
            if len(raw) != 8 * count:
                raise CheckpointError(f"{path}: truncated tensor {name}")
            arrays[name] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()

    hp = HyperParams.from_dict(header["hp"])
    if expected_hp is not None:
        for field_name in ("d", "L", "S"):
            if getattr(expected_hp, field_name) != getattr(hp, field_name):
                raise DimensionError(
                    f"checkpoint {field_name}={getattr(hp, field_name)} does not "
                    f"match requested {field_name}={getattr(expected_hp, field_name)}")
    n_layers = hp.L
    params = gnn.ModelParams(
        user_emb=arrays["user_emb"], rel_emb=arrays["rel_emb"],
        entity_feat=arrays["entity_feat"],
        weights=[arrays[f"weight_{l}"] for l in range(n_layers)])
    if params.d != hp.d:
        raise DimensionError(
            f"checkpoint tensors have d={params.d}, header says d={hp.d}")
    adam = None
    if header["adam_step"] is not None:
        adam = AdamState(step=header["adam_step"])
        for name, _ in params.named_tensors():
            adam.m[name] = arrays[f"adam_m.{name}"]
            adam.v[name] = arrays[f"adam_v.{name}"]
    return params, adam, hp, header["epoch"]
