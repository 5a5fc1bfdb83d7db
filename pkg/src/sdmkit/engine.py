"""Training and inference loops.

One training loop owns the model. Per epoch: a training pass (weighted BCE
backprop, AdamW, cosine schedule stepped on the epoch clock), a validation
pass (loss + the full metric report), one metrics.csv row, last.ckpt every
epoch and best.ckpt whenever the validation loss strictly improves.

Dropout, shuffling, and weight init draw from separate seeded RNG streams
so toggling one never perturbs the others.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import time
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import expit, softmax

from .config import ExperimentConfig, config_digest, render_config
from .errors import CheckpointMismatchError, SdmkitError, ShapeError
from .evalkit import MetricReport, PredictionSet, evaluate

log = logging.getLogger(__name__)

METRIC_COLUMNS = [
    "micro_auc", "micro_precision", "micro_recall", "micro_f1",
    "samples_auc", "samples_precision", "samples_recall", "samples_f1",
    "macro_auc", "macro_precision", "macro_recall", "macro_f1",
]


@dataclass
class TrainState:
    epoch: int = 0
    best_val_loss: float = math.inf
    global_step: int = 0
    rng_seed: int = 0
    lr_current: float = 0.0


@dataclass(frozen=True)
class LossSpec:
    kind: str = "weighted_bce_logits"
    pos_weight: float = 10.0


@dataclass(frozen=True)
class ScheduleSpec:
    eta_max: float
    eta_min: float = 0.0
    t_max: int = 25


def _check_binary(labels: np.ndarray) -> None:
    if not np.all((labels == 0) | (labels == 1)):
        raise SdmkitError("labels must be binary (0/1)")


def weighted_bce_logits(logits: np.ndarray, labels: np.ndarray,
                        pos_weight: float) -> float:
    """Mean of w*y*softplus(-z) + (1-y)*softplus(z); stable for |z| ~ 1e4."""
    logits = np.asarray(logits, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if logits.shape != labels.shape:
        raise ShapeError(f"logits {logits.shape} vs labels {labels.shape}")
    _check_binary(labels)
    sp_neg = np.logaddexp(0.0, -logits)  # softplus(-z)
    sp_pos = np.logaddexp(0.0, logits)  # softplus(z) == z + softplus(-z)
    return float(np.mean(pos_weight * labels * sp_neg + (1.0 - labels) * sp_pos))


def weighted_bce_logits_grad(logits: np.ndarray, labels: np.ndarray,
                             pos_weight: float) -> np.ndarray:
    """Gradient of weighted_bce_logits with respect to the logits."""
    logits = np.asarray(logits, dtype=float)
    labels = np.asarray(labels, dtype=float)
    grad = -pos_weight * labels * expit(-logits) + (1.0 - labels) * expit(logits)
    return grad / logits.size


def cosine_lr(t: int, spec: ScheduleSpec) -> float:
    """Cosine annealing on the epoch clock."""
    if t < 0 or t > spec.t_max:
        log.warning("cosine_lr: epoch %d outside [0, %d], clamping", t, spec.t_max)
        t = min(max(t, 0), spec.t_max)
    return spec.eta_min + (spec.eta_max - spec.eta_min) * (1 + math.cos(math.pi * t / spec.t_max)) / 2


class AdamW:
    """Decoupled weight-decay adaptive-moment optimizer.

    Moments are keyed by parameter path so the same instance survives any
    in-place model use; steps with non-finite gradients are skipped whole.
    """

    def __init__(self, weight_decay: float = 0.0, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.weight_decay = weight_decay
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, named_params, lr: float) -> bool:
        """Apply one update in place; returns False if skipped."""
        triples = list(named_params)
        for name, _, grad in triples:
            if not np.all(np.isfinite(grad)):
                log.warning("AdamW: non-finite gradient in %s; step skipped", name)
                return False
        self.t += 1
        bc1 = 1 - self.beta1**self.t
        bc2 = 1 - self.beta2**self.t
        for name, param, grad in triples:
            m = self.m.setdefault(name, np.zeros_like(param))
            v = self.v.setdefault(name, np.zeros_like(param))
            m *= self.beta1
            m += (1 - self.beta1) * grad
            v *= self.beta2
            v += (1 - self.beta2) * grad * grad
            param -= lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            param -= lr * self.weight_decay * param
        return True


def make_batches(n: int, batch_size: int, shuffle: bool, seed: int, epoch: int = 0,
                 workers: int = 0) -> list[np.ndarray]:
    """Partition indices 0..n-1 into batches.

    The sequence depends only on (seed, epoch); the workers argument is
    accepted for the dataloader contract but batch order never varies with it.
    """
    if n < 1:
        raise SdmkitError("empty sample source")
    if batch_size > n:
        log.warning("batch_size %d > %d samples; single smaller batch", batch_size, n)
    indices = np.arange(n)
    if shuffle:
        rng = np.random.default_rng([seed, 2, epoch])
        rng.shuffle(indices)
    return [indices[i : i + batch_size] for i in range(0, n, batch_size)]


def collate(source, indices) -> dict:
    """Stack samples into a batch dict keyed by modality."""
    samples = [source[int(i)] for i in indices]
    batch: dict = {"survey_ids": [s.survey_id for s in samples]}
    if samples[0].patch is not None:
        batch["patch"] = np.stack([s.patch for s in samples])
    for name in samples[0].cubes:
        batch[name] = np.stack([s.cubes[name] for s in samples])
    batch["location"] = np.array([s.coords for s in samples], dtype=float)
    if samples[0].label is not None:
        batch["labels"] = np.stack([s.label for s in samples])
    return batch


def link_function(task_type: str, logits: np.ndarray) -> np.ndarray:
    if task_type == "multiclass":
        return softmax(logits, axis=-1)
    return expit(logits)


def arch_digest(cfg: ExperimentConfig) -> str:
    """Digest of the architecture-determining sections (model + task)."""
    canon = json.dumps({"model": asdict(cfg.model), "task": asdict(cfg.task)},
                       sort_keys=True, separators=(",", ":"))
    import hashlib

    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:12]


def save_checkpoint(path: str, model, optimizer: AdamW | None, state: TrainState,
                    cfg: ExperimentConfig) -> None:
    arrays = {}
    for name, param, _ in model.named_params():
        arrays[f"param/{name}"] = param
    if optimizer is not None:
        for name, m in optimizer.m.items():
            arrays[f"opt_m/{name}"] = m
        for name, v in optimizer.v.items():
            arrays[f"opt_v/{name}"] = v
    meta = {
        "state": asdict(state),
        "arch_digest": arch_digest(cfg),
        "config_digest": config_digest(cfg),
        "opt_t": optimizer.t if optimizer is not None else 0,
    }
    arrays["meta"] = np.array(json.dumps(meta))
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_checkpoint(path: str, model, cfg: ExperimentConfig,
                    optimizer: AdamW | None = None) -> TrainState:
    """Restore weights into model, checking the architecture digest and shapes."""
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta["arch_digest"] != arch_digest(cfg):
            raise CheckpointMismatchError(
                f"{path}: architecture digest {meta['arch_digest']} != "
                f"config's {arch_digest(cfg)}"
            )
        stored = {k[len("param/"):]: data[k] for k in data.files if k.startswith("param/")}
        mismatches = []
        for name, param, _ in model.named_params():
            if name not in stored:
                mismatches.append(f"{name}: missing from checkpoint")
            elif stored[name].shape != param.shape:
                mismatches.append(
                    f"{name}: checkpoint {stored[name].shape} vs model {param.shape}"
                )
        if mismatches:
            raise CheckpointMismatchError(f"{path}: " + "; ".join(mismatches))
        for name, param, _ in model.named_params():
            param[...] = stored[name]
        if optimizer is not None:
            optimizer.t = meta.get("opt_t", 0)
            for k in data.files:
                if k.startswith("opt_m/"):
                    optimizer.m[k[len("opt_m/"):]] = data[k].copy()
                elif k.startswith("opt_v/"):
                    optimizer.v[k[len("opt_v/"):]] = data[k].copy()
    return TrainState(**meta["state"])


def _epoch_loss_pass(model, source, batches, loss_spec: LossSpec, optimizer=None,
                     lr: float = 0.0, training: bool = False):
    """Run one pass; returns (mean loss, score rows, label rows, survey ids)."""
    total, count = 0.0, 0
    scores, labels_all, ids = [], [], []
    for batch_idx in batches:
        batch = collate(source, batch_idx)
        logits = model.forward(batch, training=training)
        labels = batch["labels"]
        loss = weighted_bce_logits(logits, labels, loss_spec.pos_weight)
        if training:
            if math.isfinite(loss):
                model.backward(weighted_bce_logits_grad(logits, labels, loss_spec.pos_weight))
                optimizer.step(model.named_params(), lr)
        else:
            scores.append(expit(logits))
            labels_all.append(labels)
            ids.extend(batch["survey_ids"])
        if math.isfinite(loss):
            total += loss * len(batch_idx)
            count += len(batch_idx)
    mean = total / count if count else math.nan
    if training:
        return mean, None, None, None
    return mean, np.concatenate(scores), np.concatenate(labels_all), ids


def fit(cfg: ExperimentConfig, model, train_source, val_source,
        out_root: str | None = None) -> str:
    """Train per the config; returns the unique run directory."""
    seed = cfg.run.seed
    if hasattr(model, "set_dropout_rng"):
        model.set_dropout_rng(np.random.default_rng([seed, 1]))
    loss_spec = LossSpec(kind=cfg.optimizer.loss, pos_weight=cfg.optimizer.pos_weight)
    sched = ScheduleSpec(eta_max=cfg.optimizer.lr, t_max=cfg.optimizer.t_max)
    optimizer = AdamW(weight_decay=cfg.optimizer.weight_decay)
    root = out_root or cfg.trainer.output_dir
    run_dir = os.path.join(
        root, f"{time.strftime('%Y%m%d-%H%M%S')}-{config_digest(cfg, 8)}"
    )
    suffix = 0
    while os.path.exists(run_dir):
        suffix += 1
        run_dir = f"{run_dir}-{suffix}"
    os.makedirs(run_dir)
    with open(os.path.join(run_dir, "config.yaml"), "w", encoding="utf-8") as fh:
        fh.write(render_config(cfg))
    state = TrainState(rng_seed=seed)
    metrics_path = os.path.join(run_dir, "metrics.csv")
    with open(metrics_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "lr", "train_loss", "val_loss"] + METRIC_COLUMNS)
        for epoch in range(cfg.trainer.epochs):
            lr = cosine_lr(epoch, sched)
            state.epoch, state.lr_current = epoch, lr
            train_batches = make_batches(
                len(train_source), cfg.data.batch_size, shuffle=True, seed=seed,
                epoch=epoch, workers=cfg.data.num_workers,
            )
            train_loss, _, _, _ = _epoch_loss_pass(
                model, train_source, train_batches, loss_spec, optimizer, lr, training=True
            )
            if not math.isfinite(train_loss):
                raise SdmkitError(
                    f"epoch {epoch}: training loss non-finite for the full epoch; aborting"
                )
            state.global_step += len(train_batches)
            val_batches = make_batches(
                len(val_source), cfg.data.batch_size, shuffle=False, seed=seed
            )
            val_loss, scores, labels, ids = _epoch_loss_pass(
                model, val_source, val_batches, loss_spec, training=False
            )
            preds = [
                PredictionSet.from_scores(sid, scores[i], cfg.task.top_k)
                for i, sid in enumerate(ids)
            ]
            report = evaluate(preds, labels, cfg.task.top_k, label_ids=ids)
            row = [epoch, repr(lr), repr(train_loss), repr(val_loss)]
            row += [repr(getattr(report, col)) for col in METRIC_COLUMNS]
            writer.writerow(row)
            fh.flush()
            save_checkpoint(os.path.join(run_dir, "last.ckpt"), model, optimizer, state, cfg)
            if val_loss < state.best_val_loss:
                state.best_val_loss = val_loss
                save_checkpoint(os.path.join(run_dir, "best.ckpt"), model, optimizer, state, cfg)
            if cfg.trainer.log_interval and epoch % cfg.trainer.log_interval == 0:
                log.info(
                    "epoch %d/%d lr=%.3e train_loss=%.5f val_loss=%.5f micro_auc=%.4f",
                    epoch + 1, cfg.trainer.epochs, lr, train_loss, val_loss,
                    report.micro_auc,
                )
    return run_dir


def predict(cfg: ExperimentConfig, model, weights_path: str, test_source,
            out_path: str | None = None) -> list[PredictionSet]:
    """Load a checkpoint and score every survey in the test source."""
    load_checkpoint(weights_path, model, cfg)
    batches = make_batches(len(test_source), cfg.data.batch_size, shuffle=False,
                           seed=cfg.run.seed)
    predictions = []
    for batch_idx in batches:
        batch = collate(test_source, batch_idx)
        logits = model.forward(batch, training=False)
        scores = link_function(cfg.task.type, logits)
        for i, sid in enumerate(batch["survey_ids"]):
            predictions.append(PredictionSet.from_scores(sid, scores[i], cfg.task.top_k))
    if out_path:
        save_predictions(predictions, out_path)
    return predictions


def save_predictions(predictions: list[PredictionSet], path: str) -> None:
    """predictions.csv: surveyId, topk ids (rank order), all class scores."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["surveyId", "topk", "scores"])
        for pred in predictions:
            writer.writerow([
                pred.survey_id,
                " ".join(str(int(i)) for i in pred.topk),
                " ".join(repr(float(s)) for s in pred.scores),
            ])


def load_predictions(path: str) -> list[PredictionSet]:
    predictions = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or {"surveyId", "topk", "scores"} - set(reader.fieldnames):
            raise SdmkitError(f"{path}: not a predictions.csv file")
        for row in reader:
            topk = np.array([int(t) for t in row["topk"].split()])
            scores = np.array([float(s) for s in row["scores"].split()])
            predictions.append(PredictionSet(row["surveyId"], scores, topk))
    return predictions
