"""Mini-batch training with early stopping, plus evaluation and weight sweeps.

One call to :func:`train` owns the whole run: it builds the model from the
train seed, walks seeded mini-batches, applies Adam-style updates with an
L2 penalty, validates at every epoch end, and restores the parameters of
the best validation-AUC epoch before freezing them. Everything is
deterministic given (dataset, configs, seed): rerunning produces
bit-identical parameters and history.

Model selection is on validation AUC alone; the fairness weights, not the
stopping rule, govern the fairness/accuracy trade-off.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from . import metrics as fm
from .autodiff import backward
from .data import Dataset, batches, full_batch
from .errors import (
    ConfigError,
    DomainError,
    NumericError,
    TrainingError,
    UsageError,
)
from .losses import LossBreakdown, LossWeights, assign_groups, ce_loss, joint_loss
from .model import FairIntModel, ModelConfig, VanillaModel

__all__ = ["TrainConfig", "EpochRecord", "TrainHistory", "SweepPoint", "Adam", "train", "evaluate_model", "sweep"]


@dataclass(frozen=True)
class TrainConfig:
    """One training run's hyperparameters and ablation switches.

    ``enable_bid`` off trains the vanilla MLP baseline instead of the
    interaction model (no reconstructor, task loss only). ``enable_ifc``
    and ``enable_fc`` off zero the corresponding fairness terms exactly,
    independent of the lambda values. ``dropout`` here is what training
    uses; it overrides whatever the architecture config carries.
    """

    lambda_ifc: float = 0.0
    lambda_fc: float = 0.0
    learning_rate: float = 1e-3
    batch_size: int = 256
    max_epochs: int = 200
    patience: int = 10
    dropout: float = 0.1
    l2: float = 1e-4
    seed: int = 0
    enable_ifc: bool = True
    enable_fc: bool = True
    enable_bid: bool = True

    def __post_init__(self):
        LossWeights(self.lambda_ifc, self.lambda_fc)  # validates non-negativity
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be at least 1, got {self.batch_size}")
        if self.max_epochs < 0:
            raise ConfigError(f"max_epochs must be non-negative, got {self.max_epochs}")
        if self.patience < 1:
            raise ConfigError(f"patience must be at least 1, got {self.patience}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.l2 < 0:
            raise ConfigError(f"l2 must be non-negative, got {self.l2}")
        if self.seed < 0:
            raise ConfigError(f"seed must be non-negative, got {self.seed}")

    def effective_weights(self) -> LossWeights:
        return LossWeights(
            lambda_ifc=self.lambda_ifc if self.enable_ifc else 0.0,
            lambda_fc=self.lambda_fc if self.enable_fc else 0.0,
        )

    def to_dict(self) -> dict:
        return {f: getattr(self, f) for f in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        extra = set(doc) - set(cls.__dataclass_fields__)
        if extra:
            raise ConfigError(f"unknown training options: {sorted(extra)}")
        return cls(**doc)


@dataclass
class EpochRecord:
    """Batch-size-weighted mean losses plus the epoch-end validation report."""

    epoch: int
    losses: LossBreakdown
    val_report: fm.FairnessReport

    def history_line(self) -> dict:
        return {
            "epoch": self.epoch,
            **self.losses.as_dict(),
            "val_auc": self.val_report.auc,
            "val_ddp": self.val_report.ddp,
            "val_deo": self.val_report.deo,
        }


@dataclass
class TrainHistory:
    epochs: list
    best_epoch: int | None
    stopping_reason: str

    def history_lines(self) -> list[dict]:
        return [r.history_line() for r in self.epochs]


class Adam:
    """Adaptive moment updates with a coupled L2 penalty.

    The penalty term is l2 * sum(w^2) over every trainable parameter, so
    its gradient contribution is 2 * l2 * w; it enters the moment
    estimates like any other gradient and never touches the logged loss
    values.
    """

    def __init__(self, params, learning_rate: float, l2: float = 0.0,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.learning_rate = learning_rate
        self.l2 = l2
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self._m = [np.zeros_like(p.tensor.values) for p in self.params]
        self._v = [np.zeros_like(p.tensor.values) for p in self.params]

    def step(self) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self._m, self._v):
            if p.tensor.grad is None:
                raise UsageError(f"parameter {p.name!r} has no gradient; call backward first")
            g = p.tensor.grad
            if self.l2 > 0.0:
                g = g + 2.0 * self.l2 * p.tensor.values
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = self.learning_rate * (m / b1c) / (np.sqrt(v / b2c) + self.eps)
            p.tensor.values = p.tensor.values - update


def _freeze_model(model) -> None:
    for p in model.parameters():
        p.tensor.values.setflags(write=False)


def evaluate_model(model, dataset: Dataset, split: str, threshold: float = 0.5,
                   groups_from: str = "true") -> fm.FairnessReport:
    """Eval-mode forward over a whole split, then the full metric report.

    With ``groups_from="reconstructed"`` the fairness gaps are measured
    against thresholded reconstructor output instead of the true
    sensitive column (which the model never sees either way); the
    reconstruction-accuracy entry is always measured against the true
    column.
    """
    batch = full_batch(dataset, split)
    if batch.size == 0:
        raise UsageError(f"split {split!r} has no rows")
    true_s = batch.true_sensitive.astype(np.int64)
    if isinstance(model, FairIntModel):
        trace = model.forward(batch.features)
        scores = trace.prediction.values.reshape(-1)
        pseudo = trace.pseudo_scalar.values.reshape(-1)
    else:
        scores = model.forward(batch.features).values.reshape(-1)
        pseudo = None
    if groups_from == "reconstructed":
        if pseudo is None:
            raise UsageError("this model has no reconstructor; groups_from='reconstructed' needs one")
        group_vector = assign_groups(pseudo)
    else:
        group_vector = true_s
    report = fm.evaluate(
        scores, batch.labels, group_vector,
        threshold=threshold,
        pseudo_scores=None,
        groups_from=groups_from,
    )
    if pseudo is not None:
        report.sar_accuracy = fm.sar_accuracy(pseudo, true_s)
    return report


def train(dataset: Dataset, model_config: ModelConfig, train_config: TrainConfig):
    """Run one full optimization and return (frozen model, history).

    The dataset must already be split. Training walks seeded shuffled
    mini-batches; any non-finite value surfacing in the loss stops the
    run with the epoch and batch in the error. Early stopping triggers
    after ``patience`` epochs without a new best validation AUC, and the
    returned parameters always belong to the best epoch, never a later
    one.
    """
    if dataset.split_tags is None:
        raise UsageError("dataset must be split before training")
    cfg = train_config
    arch = replace(model_config, dropout=cfg.dropout)
    if cfg.enable_bid:
        model = FairIntModel(dataset.input_columns, arch, seed=cfg.seed)
    else:
        model = VanillaModel(dataset.input_columns, arch, seed=cfg.seed)
    weights = cfg.effective_weights()
    params = model.parameters()
    optimizer = Adam(params, cfg.learning_rate, l2=cfg.l2)

    records: list[EpochRecord] = []
    best_auc = -math.inf
    best_epoch: int | None = None
    best_arrays: dict | None = None
    epochs_since_best = 0
    stopping_reason = "max_epochs"

    for epoch in range(cfg.max_epochs):
        dropout_rng = np.random.default_rng([cfg.seed, epoch, 1])
        sums = {"l0": 0.0, "l_sar": 0.0, "l_ifc": 0.0, "l_fc": 0.0, "total": 0.0}
        rows = 0
        for batch_index, batch in enumerate(batches(dataset, "train", cfg.batch_size, cfg.seed, epoch)):
            try:
                if cfg.enable_bid:
                    trace = model.forward(batch.features, training=True, rng=dropout_rng)
                    total, breakdown = joint_loss(trace, batch.labels, batch.true_sensitive, weights)
                else:
                    pred = model.forward(batch.features, training=True, rng=dropout_rng)
                    total = ce_loss(pred, batch.labels)
                    l0 = total.item()
                    breakdown = LossBreakdown(l0=l0, l_sar=0.0, l_ifc=0.0, l_fc=0.0, total=l0)
                backward(total, params=params)
                optimizer.step()
            except (NumericError, DomainError) as exc:
                raise TrainingError(
                    f"loss diverged at epoch {epoch}, batch {batch_index}: {exc}"
                ) from exc
            for key, value in breakdown.as_dict().items():
                sums[key] += value * batch.size
            rows += batch.size

        epoch_losses = LossBreakdown(**{k: v / rows for k, v in sums.items()})
        val_report = evaluate_model(model, dataset, "val")
        records.append(EpochRecord(epoch=epoch, losses=epoch_losses, val_report=val_report))

        if val_report.auc > best_auc:
            best_auc = val_report.auc
            best_epoch = epoch
            best_arrays = {name: arr.copy() for name, arr in model.parameter_arrays().items()}
            epochs_since_best = 0
        else:
            epochs_since_best += 1
            if epochs_since_best >= cfg.patience:
                stopping_reason = "early_stopping"
                break

    if best_arrays is not None:
        model.load_arrays(best_arrays)
    _freeze_model(model)
    return model, TrainHistory(epochs=records, best_epoch=best_epoch, stopping_reason=stopping_reason)


@dataclass
class SweepPoint:
    """Outcome of one grid point: a report, or the error that stopped it."""

    lambda_ifc: float
    lambda_fc: float
    report: fm.FairnessReport | None
    error: str | None = None

    def tradeoff_row(self) -> dict:
        return {
            "lambda_ifc": self.lambda_ifc,
            "lambda_fc": self.lambda_fc,
            "auc": None if self.report is None else self.report.auc,
            "ddp": None if self.report is None else self.report.ddp,
            "deo": None if self.report is None else self.report.deo,
        }


def sweep(dataset: Dataset, model_config: ModelConfig, base_config: TrainConfig,
          lambda_grid) -> list[SweepPoint]:
    """Train once per (lambda_ifc, lambda_fc) pair; evaluate on the test split.

    Every point is an independent run from the same seed, so points
    differ only in their fairness weights. A failing point records its
    error and the sweep continues; results keep the grid's order.
    """
    grid = list(lambda_grid)
    if not grid:
        raise UsageError("sweep needs a non-empty grid of (lambda_ifc, lambda_fc) pairs")
    points = []
    for li, lf in grid:
        try:
            config = replace(base_config, lambda_ifc=float(li), lambda_fc=float(lf))
            model, _ = train(dataset, model_config, config)
            report = evaluate_model(model, dataset, "test")
            points.append(SweepPoint(lambda_ifc=float(li), lambda_fc=float(lf), report=report))
        except Exception as exc:  # per-point isolation is the contract
            points.append(
                SweepPoint(
                    lambda_ifc=float(li),
                    lambda_fc=float(lf),
                    report=None,
                    error=f"{type(exc).__name__}: {exc}",
                )
            )
    return points
