"""RMSProp training loop with deterministic batching and checkpoints.

The optimizer update, per parameter and elementwise, is

    g   = grad + weight_decay * param
    sq  = rms_decay * sq + (1 - rms_decay) * g^2
    buf = momentum * buf + g / (sqrt(sq) + epsilon_opt)
    param -= learning_rate * buf

i.e. classic RMSProp with momentum applied to the preconditioned
gradient and coupled L2 weight decay.  Training is a pure function of
(dataset, config): one PRNG seeded from the config drives both the
parameter init and the per-epoch shuffles.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .configfile import dataclass_from_kv, parse_kv_file
from .data_io import Dataset, validate_dataset
from .errors import ArgumentError, DatasetValidationError, NumericError, ShapeError
from .losses import LossBreakdown, LossConfig, total_loss
from .model import ModelDims, ModelParams, init_params_from_rng
from .ndmath import Rng

HISTORY_HEADER = ("epoch", "acec_a2v", "acec_v2a", "distill", "total")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 50
    momentum: float = 0.9
    weight_decay: float = 1e-4
    epochs: int = 200
    seed: int = 1
    lambda_cal: float = 0.1
    lambda_distill: float = 0.001
    calibration_sign: str = "prose"
    epsilon_kl: float = 1e-8
    rms_decay: float = 0.99
    epsilon_opt: float = 1e-8

    def validate(self) -> None:
        if self.learning_rate <= 0:
            raise ArgumentError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0 <= self.momentum < 1:
            raise ArgumentError(f"momentum must lie in [0, 1), got {self.momentum}")
        if not 0 <= self.rms_decay < 1:
            raise ArgumentError(f"rms_decay must lie in [0, 1), got {self.rms_decay}")
        if self.batch_size < 1:
            raise ArgumentError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ArgumentError(f"epochs must be >= 0, got {self.epochs}")
        if self.weight_decay < 0:
            raise ArgumentError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.epsilon_opt <= 0:
            raise ArgumentError(f"epsilon_opt must be > 0, got {self.epsilon_opt}")
        self.loss_config().validate()

    def loss_config(self, **overrides) -> LossConfig:
        kwargs = {
            "lambda_cal": self.lambda_cal,
            "lambda_distill": self.lambda_distill,
            "calibration_sign": self.calibration_sign,
            "epsilon_kl": self.epsilon_kl,
        }
        kwargs.update(overrides)
        return LossConfig(**kwargs)


def load_train_config(path: str | Path) -> TrainConfig:
    """Read a TrainConfig from a flat key=value file."""
    cfg = dataclass_from_kv(TrainConfig, parse_kv_file(path))
    cfg.validate()
    return cfg


@dataclass
class OptState:
    """Per-parameter RMSProp buffers."""

    square_avg: dict[str, np.ndarray]
    momentum_buf: dict[str, np.ndarray]
    step: int = 0

    @staticmethod
    def zeros_like(params: dict[str, np.ndarray]) -> "OptState":
        return OptState(
            square_avg={k: np.zeros_like(v) for k, v in params.items()},
            momentum_buf={k: np.zeros_like(v) for k, v in params.items()},
        )


def rmsprop_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: OptState,
    cfg: TrainConfig,
) -> tuple[dict[str, np.ndarray], OptState]:
    """One optimizer step; returns fresh params and state."""
    new_params: dict[str, np.ndarray] = {}
    new_sq: dict[str, np.ndarray] = {}
    new_buf: dict[str, np.ndarray] = {}
    for name, param in params.items():
        grad = grads[name]
        if grad.shape != param.shape:
            raise ShapeError(
                f"gradient for {name} has shape {grad.shape}, parameter {param.shape}"
            )
        g = grad + cfg.weight_decay * param
        sq = cfg.rms_decay * state.square_avg[name] + (1.0 - cfg.rms_decay) * g * g
        buf = cfg.momentum * state.momentum_buf[name] + g / (np.sqrt(sq) + cfg.epsilon_opt)
        new_params[name] = param - cfg.learning_rate * buf
        new_sq[name] = sq
        new_buf[name] = buf
    return new_params, OptState(square_avg=new_sq, momentum_buf=new_buf,
                                step=state.step + 1)


def make_batches(n: int, batch_size: int, rng: Rng) -> list[np.ndarray]:
    """Shuffle [0, n) and chunk it; the final short batch is kept."""
    if n < 1:
        raise ArgumentError(f"make_batches requires n >= 1, got {n}")
    if batch_size < 1:
        raise ArgumentError(f"batch_size must be >= 1, got {batch_size}")
    perm = np.arange(n, dtype=np.int64)
    rng.shuffle(perm)
    return [perm[i:i + batch_size] for i in range(0, n, batch_size)]


@dataclass
class TrainResult:
    params: ModelParams
    history: list[LossBreakdown] = field(default_factory=list)


def train(
    ds: Dataset,
    cfg: TrainConfig,
    loss_cfg: LossConfig | None = None,
) -> TrainResult:
    """Train on ``ds.train_idx``; returns final params and per-epoch losses.

    ``loss_cfg`` overrides the loss settings derived from ``cfg`` (used by
    the ablation grid to switch sub-nets and distillation terms).
    """
    cfg.validate()
    violations = validate_dataset(ds)
    if violations:
        raise DatasetValidationError(violations)
    if ds.train_idx.size == 0:
        raise ArgumentError("dataset has an empty train split")
    lcfg = loss_cfg if loss_cfg is not None else cfg.loss_config()
    lcfg.validate()

    rng = Rng(cfg.seed)
    params = init_params_from_rng(ModelDims.for_dataset(ds), rng)
    param_dict = params.as_dict()
    state = OptState.zeros_like(param_dict)
    history: list[LossBreakdown] = []

    n_train = int(ds.train_idx.size)
    for epoch in range(cfg.epochs):
        sums = np.zeros(4)
        for batch_no, batch in enumerate(make_batches(n_train, cfg.batch_size, rng)):
            idx = ds.train_idx[batch]
            try:
                breakdown, grads = total_loss(params, ds, idx, lcfg)
            except NumericError as exc:
                raise NumericError(
                    f"non-finite loss at epoch {epoch}, batch {batch_no}: {exc}"
                ) from exc
            param_dict, state = rmsprop_step(param_dict, grads, state, cfg)
            params = params.with_updates(param_dict)
            weight = len(batch)
            sums += weight * np.asarray(
                [breakdown.acec_a2v, breakdown.acec_v2a, breakdown.distill, breakdown.total]
            )
        for name, arr in param_dict.items():
            if not np.isfinite(arr).all():
                raise NumericError(f"parameter {name} became non-finite at epoch {epoch}")
        mean = sums / n_train
        history.append(LossBreakdown(*(float(v) for v in mean)))
    return TrainResult(params=params, history=history)


def write_history_csv(history: list[LossBreakdown], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(HISTORY_HEADER)
        for epoch, row in enumerate(history):
            writer.writerow(
                [epoch, repr(row.acec_a2v), repr(row.acec_v2a),
                 repr(row.distill), repr(row.total)]
            )
