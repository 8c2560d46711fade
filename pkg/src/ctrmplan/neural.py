"""Learned motion sampler: conditional VAE with a categorical latent.

Everything runs on float64 numpy through the small reverse-mode core in
autograd.py. Training is deterministic given the seed: fixed init draw
order, fixed minibatch permutations, and a fixed per-epoch noise stream
for validation scoring.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .autograd import ShapeMismatch, Tensor, concat, log_softmax, softmax
from .features import (
    IND_DIM,
    NBR_FEAT_DIM,
    SELF_FEAT_DIM,
    MotionEncoding,
    RawRecord,
    SampleSet,
    assemble_batch,
    comm_aggregate,
    comm_aggregate_batch,
    compose,
)

NET_NAMES = (
    "enc_theta",
    "enc_prime_psi",
    "dec_phi",
    "nn_self_env",
    "nn_other_env",
    "nn_comm",
    "nn_ind",
)

CHECKPOINT_VERSION = 1


def _he_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    lim = math.sqrt(6.0 / fan_in)
    return rng.uniform(-lim, lim, size=(fan_in, fan_out))


class Mlp:
    """Two-layer perceptron: fc1 -> (batch norm) -> ReLU -> fc2."""

    def __init__(self, dim_in: int, dim_hidden: int, dim_out: int, batchnorm: bool, rng: np.random.Generator):
        self.dim_in = dim_in
        self.dim_hidden = dim_hidden
        self.dim_out = dim_out
        self.batchnorm = batchnorm
        self.w1 = Tensor(_he_uniform(rng, dim_in, dim_hidden), requires_grad=True)
        self.b1 = Tensor(np.zeros(dim_hidden), requires_grad=True)
        self.w2 = Tensor(_he_uniform(rng, dim_hidden, dim_out), requires_grad=True)
        self.b2 = Tensor(np.zeros(dim_out), requires_grad=True)
        if batchnorm:
            self.gamma = Tensor(np.ones(dim_hidden), requires_grad=True)
            self.beta = Tensor(np.zeros(dim_hidden), requires_grad=True)
            self.run_mean = np.zeros(dim_hidden)
            self.run_var = np.ones(dim_hidden)
        self.bn_momentum = 0.9
        self.bn_eps = 1e-5

    def params(self) -> dict[str, Tensor]:
        out = {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}
        if self.batchnorm:
            out["gamma"] = self.gamma
            out["beta"] = self.beta
        return out

    def buffers(self) -> dict[str, np.ndarray]:
        if not self.batchnorm:
            return {}
        return {"run_mean": self.run_mean, "run_var": self.run_var}

    def forward(self, x: Tensor, train: bool = False) -> Tensor:
        if x.data.ndim != 2 or x.data.shape[1] != self.dim_in:
            raise ShapeMismatch(f"expected (batch, {self.dim_in}), got {x.data.shape}")
        h = x @ self.w1 + self.b1
        if self.batchnorm:
            if train:
                mean = h.mean(axis=0)
                var = ((h - mean) ** 2).mean(axis=0)
                self.run_mean = self.bn_momentum * self.run_mean + (1.0 - self.bn_momentum) * mean.data
                self.run_var = self.bn_momentum * self.run_var + (1.0 - self.bn_momentum) * var.data
                h = (h - mean) / ((var + self.bn_eps) ** 0.5)
            else:
                h = (h - Tensor(self.run_mean)) / Tensor(np.sqrt(self.run_var + self.bn_eps))
            h = h * self.gamma + self.beta
        h = h.relu()
        return h @ self.w2 + self.b2

    def forward_np(self, x: np.ndarray) -> np.ndarray:
        """Inference-only evaluation on plain arrays (running stats, no graph)."""
        if x.ndim != 2 or x.shape[1] != self.dim_in:
            raise ShapeMismatch(f"expected (batch, {self.dim_in}), got {x.shape}")
        h = x @ self.w1.data + self.b1.data
        if self.batchnorm:
            h = (h - self.run_mean) / np.sqrt(self.run_var + self.bn_eps)
            h = h * self.gamma.data + self.beta.data
        np.maximum(h, 0.0, out=h)
        return h @ self.w2.data + self.b2.data


def adam_init(params: dict[str, Tensor]) -> dict:
    return {
        "step": 0,
        "m": {k: np.zeros_like(p.data) for k, p in params.items()},
        "v": {k: np.zeros_like(p.data) for k, p in params.items()},
    }


def adam_step(
    params: dict[str, Tensor],
    state: dict,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One update over every param that holds a gradient."""
    state["step"] += 1
    t = state["step"]
    for key, p in params.items():
        g = p.grad
        if g is None:
            continue
        m = state["m"][key]
        v = state["v"][key]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        p.data -= lr * m_hat / (np.sqrt(v_hat) + eps)


def gumbel_noise(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    u = np.clip(rng.random(shape), 1e-12, 1.0 - 1e-12)
    return -np.log(-np.log(u))


def gumbel_softmax(log_probs: Tensor, temperature: float, rng: np.random.Generator | None = None, noise: np.ndarray | None = None) -> Tensor:
    """Differentiable categorical relaxation: softmax((log q + G) / tau)."""
    if noise is None:
        if rng is None:
            raise ValueError("need rng or explicit noise")
        noise = gumbel_noise(rng, log_probs.data.shape)
    return softmax((log_probs + Tensor(noise)) * (1.0 / temperature), axis=-1)


def kl_categorical(log_q: Tensor, log_p: Tensor) -> Tensor:
    """Per-row KL(q || p) from log-probability rows."""
    return (log_q.exp() * (log_q - log_p)).sum(axis=-1)


@dataclass(frozen=True)
class ModelConfig:
    fov_l: int = 11
    env_dim: int = 32
    msg_dim: int = 32
    attn_dim: int = 10
    latent_dim: int = 64
    hidden_dim: int = 32
    neighbors: int = 15
    use_comm: bool = True
    use_ind: bool = True

    @property
    def fov_dim(self) -> int:
        return 2 * self.fov_l * self.fov_l

    @property
    def x_goal_dim(self) -> int:
        return SELF_FEAT_DIM + self.env_dim

    @property
    def x_dim(self) -> int:
        return self.x_goal_dim + self.msg_dim + IND_DIM

    @property
    def comm_in_dim(self) -> int:
        return NBR_FEAT_DIM + self.env_dim

    @property
    def comm_out_dim(self) -> int:
        return self.attn_dim + self.msg_dim

    @property
    def ind_in_dim(self) -> int:
        return self.x_goal_dim + self.msg_dim


@dataclass
class CvaeModel:
    config: ModelConfig
    nets: dict[str, Mlp]

    def trainable_params(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for name in NET_NAMES:
            if not self._net_active(name):
                continue
            for key, p in self.nets[name].params().items():
                out[f"{name}.{key}"] = p
        return out

    def _net_active(self, name: str) -> bool:
        if name in ("nn_other_env", "nn_comm") and not self.config.use_comm:
            return False
        if name == "nn_ind" and not self.config.use_ind:
            return False
        return True


def build_model(config: ModelConfig, seed: int) -> CvaeModel:
    c = config
    specs = {
        "enc_theta": (c.x_dim, c.latent_dim, True),
        "enc_prime_psi": (c.x_dim + 3, c.latent_dim, True),
        "dec_phi": (c.x_dim + c.latent_dim, 3, True),
        "nn_self_env": (c.fov_dim, c.env_dim, False),
        "nn_other_env": (c.fov_dim, c.env_dim, False),
        "nn_comm": (c.comm_in_dim, c.comm_out_dim, False),
        "nn_ind": (c.ind_in_dim, IND_DIM, False),
    }
    nets = {}
    for idx, name in enumerate(NET_NAMES):
        dim_in, dim_out, bn = specs[name]
        rng = np.random.default_rng(np.random.SeedSequence([seed, idx]))
        nets[name] = Mlp(dim_in, c.hidden_dim, dim_out, bn, rng)
    return CvaeModel(config, nets)


def _condition_tensors(model: CvaeModel, batch: dict[str, np.ndarray], train: bool) -> tuple[Tensor, Tensor]:
    """x_goal (B, 40) and x_comm (B, 32) from a padded batch."""
    c = model.config
    b = batch["self_feat"].shape[0]
    self_env = model.nets["nn_self_env"].forward(Tensor(batch["self_fov"]), train)
    x_goal = concat([Tensor(batch["self_feat"]), self_env], axis=1)
    if not c.use_comm:
        return x_goal, Tensor(np.zeros((b, c.msg_dim)))
    k = batch["nbr_feat"].shape[1]
    flat_fov = batch["nbr_fov"].reshape(b * k, c.fov_dim)
    other_env = model.nets["nn_other_env"].forward(Tensor(flat_fov), train)
    comm_in = concat([Tensor(batch["nbr_feat"].reshape(b * k, NBR_FEAT_DIM)), other_env], axis=1)
    comm_out = model.nets["nn_comm"].forward(comm_in, train).reshape(b, k, c.comm_out_dim)
    alphas = comm_out[:, :, : c.attn_dim]
    messages = comm_out[:, :, c.attn_dim :]
    return x_goal, comm_aggregate_batch(alphas, messages, batch["nbr_mask"])


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 50
    learning_rate: float = 1e-3
    kl_weight: float = 0.1
    nll_weight: float = 1e-3
    gumbel_temperature: float = 1.0
    seed: int = 0


def cvae_loss(
    model: CvaeModel,
    batch: dict[str, np.ndarray],
    cfg: TrainConfig,
    train: bool,
    rng: np.random.Generator | None = None,
    noise: np.ndarray | None = None,
) -> tuple[Tensor, dict[str, float]]:
    """Weighted reconstruction + KL, plus the deviation-class penalty."""
    c = model.config
    b = batch["y"].shape[0]
    x_goal, x_comm = _condition_tensors(model, batch, train)
    truth = np.zeros((b, IND_DIM))
    truth[np.arange(b), batch["ind_truth"]] = 1.0
    x_ind = Tensor(truth if c.use_ind else np.zeros((b, IND_DIM)))
    x = concat([x_goal, x_comm, x_ind], axis=1)

    log_p = log_softmax(model.nets["enc_theta"].forward(x, train), axis=-1)
    log_q = log_softmax(model.nets["enc_prime_psi"].forward(concat([x, Tensor(batch["y"])], axis=1), train), axis=-1)
    z = gumbel_softmax(log_q, cfg.gumbel_temperature, rng=rng, noise=noise)
    y_hat = model.nets["dec_phi"].forward(concat([x, z], axis=1), train)

    recon = ((y_hat - Tensor(batch["y"])) ** 2).sum(axis=-1)
    kl = kl_categorical(log_q, log_p)
    weighted = Tensor(batch["weight"]) * (recon + kl * cfg.kl_weight)
    loss = weighted.mean()
    stats = {
        "recon": float(recon.data.mean()),
        "kl": float(kl.data.mean()),
        "elbo_loss": float(loss.data),
    }
    if c.use_ind:
        logits = model.nets["nn_ind"].forward(concat([x_goal, x_comm], axis=1), train)
        picked = log_softmax(logits, axis=-1)[np.arange(b), batch["ind_truth"]]
        nll = -picked.mean()
        loss = loss + nll * cfg.nll_weight
        stats["ind_nll"] = float(nll.data)
    stats["loss"] = float(loss.data)
    return loss, stats


def _snapshot(model: CvaeModel) -> dict[str, np.ndarray]:
    out = {}
    for name, net in model.nets.items():
        for key, p in net.params().items():
            out[f"{name}.{key}"] = p.data.copy()
        for key, buf in net.buffers().items():
            out[f"{name}.{key}"] = buf.copy()
    return out


def _restore(model: CvaeModel, snap: dict[str, np.ndarray]) -> None:
    for name, net in model.nets.items():
        for key, p in net.params().items():
            p.data = snap[f"{name}.{key}"].copy()
        if net.batchnorm:
            net.run_mean = snap[f"{name}.run_mean"].copy()
            net.run_var = snap[f"{name}.run_var"].copy()


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int = -1
    best_val_loss: float = math.inf


def _dataset_loss(model: CvaeModel, ds: SampleSet, cfg: TrainConfig, rng: np.random.Generator) -> float:
    total = 0.0
    for lo in range(0, ds.size, cfg.batch_size):
        idx = np.arange(lo, min(lo + cfg.batch_size, ds.size))
        batch = assemble_batch(ds, idx)
        loss, _ = cvae_loss(model, batch, cfg, train=False, rng=rng)
        total += float(loss.data) * len(idx)
    return total / ds.size


def train(model: CvaeModel, train_ds: SampleSet, val_ds: SampleSet, cfg: TrainConfig) -> TrainHistory:
    """Minibatch Adam; the weights kept are those of the best validation epoch."""
    params = model.trainable_params()
    opt = adam_init(params)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    hist = TrainHistory()
    best: dict[str, np.ndarray] | None = None
    for epoch in range(cfg.epochs):
        perm = rng.permutation(train_ds.size)
        total = 0.0
        for lo in range(0, train_ds.size, cfg.batch_size):
            idx = perm[lo : lo + cfg.batch_size]
            batch = assemble_batch(train_ds, idx)
            loss, _ = cvae_loss(model, batch, cfg, train=True, rng=rng)
            loss.backward()
            adam_step(params, opt, cfg.learning_rate)
            total += float(loss.data) * len(idx)
        hist.train_loss.append(total / train_ds.size)
        # Same noise stream each epoch keeps validation scores comparable.
        val_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 2]))
        val = _dataset_loss(model, val_ds, cfg, val_rng)
        hist.val_loss.append(val)
        if val < hist.best_val_loss:
            hist.best_val_loss = val
            hist.best_epoch = epoch
            best = _snapshot(model)
    if best is not None:
        _restore(model, best)
    return hist


def _np_log_softmax(v: np.ndarray) -> np.ndarray:
    s = v - v.max()
    return s - np.log(np.exp(s).sum())


def predict_condition(model: CvaeModel, record: RawRecord) -> np.ndarray:
    """Full condition vector for one sample, inference path."""
    c = model.config
    self_env = model.nets["nn_self_env"].forward_np(record.self_fov[None])[0]
    x_goal = np.concatenate([record.self_feat, self_env])
    if c.use_comm:
        other_env = model.nets["nn_other_env"].forward_np(record.nbr_fov)
        feats = np.concatenate([record.nbr_feat, other_env], axis=1)
        x_comm = comm_aggregate(list(feats), model.nets["nn_comm"], c.attn_dim)
    else:
        x_comm = np.zeros(c.msg_dim)
    if c.use_ind:
        logits = model.nets["nn_ind"].forward_np(np.concatenate([x_goal, x_comm])[None])[0]
        x_ind = np.zeros(IND_DIM)
        x_ind[int(np.argmax(_np_log_softmax(logits)))] = 1.0
    else:
        x_ind = np.zeros(IND_DIM)
    return compose(x_goal, x_comm, x_ind)


def sample_motion(model: CvaeModel, record: RawRecord, rng: np.random.Generator) -> MotionEncoding:
    """Draw one motion proposal: latent from the prior encoder, then decode."""
    c = model.config
    x = predict_condition(model, record)
    log_p = _np_log_softmax(model.nets["enc_theta"].forward_np(x[None])[0])
    z_idx = int(rng.choice(c.latent_dim, p=np.exp(log_p)))
    z = np.zeros(c.latent_dim)
    z[z_idx] = 1.0
    y = model.nets["dec_phi"].forward_np(np.concatenate([x, z])[None])[0]
    mag = max(float(y[0]), 0.0)
    d = math.hypot(y[1], y[2])
    if d == 0.0:
        return MotionEncoding(mag, (0.0, 0.0))
    return MotionEncoding(mag, (float(y[1] / d), float(y[2] / d)))


def save_model(
    model: CvaeModel,
    path: str,
    train_cfg: TrainConfig | None = None,
    extra: dict | None = None,
) -> None:
    arrays: dict[str, np.ndarray] = {}
    for name, net in model.nets.items():
        for key, p in net.params().items():
            arrays[f"{name}.{key}"] = p.data
        for key, buf in net.buffers().items():
            arrays[f"{name}.{key}"] = buf
    meta = {
        "version": CHECKPOINT_VERSION,
        "config": {
            "fov_l": model.config.fov_l,
            "env_dim": model.config.env_dim,
            "msg_dim": model.config.msg_dim,
            "attn_dim": model.config.attn_dim,
            "latent_dim": model.config.latent_dim,
            "hidden_dim": model.config.hidden_dim,
            "neighbors": model.config.neighbors,
            "use_comm": model.config.use_comm,
            "use_ind": model.config.use_ind,
        },
    }
    if train_cfg is not None:
        meta["train"] = {
            "epochs": train_cfg.epochs,
            "batch_size": train_cfg.batch_size,
            "learning_rate": train_cfg.learning_rate,
            "kl_weight": train_cfg.kl_weight,
            "nll_weight": train_cfg.nll_weight,
            "gumbel_temperature": train_cfg.gumbel_temperature,
            "seed": train_cfg.seed,
        }
    if extra is not None:
        meta["extra"] = extra
    with open(path, "wb") as fh:
        # file handle keeps the exact filename (savez appends .npz to paths)
        np.savez_compressed(fh, meta=np.array(json.dumps(meta)), **arrays)


def load_model(path: str) -> CvaeModel:
    with np.load(path) as data:
        meta = json.loads(str(data["meta"]))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ShapeMismatch(f"unsupported checkpoint version {meta.get('version')!r}")
        config = ModelConfig(**meta["config"])
        model = build_model(config, seed=0)
        for name, net in model.nets.items():
            for key, p in net.params().items():
                full = f"{name}.{key}"
                if full not in data:
                    raise ShapeMismatch(f"checkpoint missing {full}")
                stored = data[full]
                if stored.shape != p.data.shape:
                    raise ShapeMismatch(f"{full}: stored {stored.shape}, model wants {p.data.shape}")
                p.data = stored.astype(np.float64)
            if net.batchnorm:
                for key in ("run_mean", "run_var"):
                    full = f"{name}.{key}"
                    if full not in data:
                        raise ShapeMismatch(f"checkpoint missing {full}")
                    stored = data[full]
                    if stored.shape != getattr(net, key).shape:
                        raise ShapeMismatch(f"{full}: stored {stored.shape} has wrong size")
                    setattr(net, key, stored.astype(np.float64))
    return model
