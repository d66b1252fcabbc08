"""
Classifier training with early stopping, and evaluation reports.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from tqdm import tqdm

from ..core.exceptions import DataValidationError, EvaluationError, TrainingError
from ..tensor import ops
from ..tensor.optim import Adam, AdamHyperParams
from ..tensor.tensor import GradientTape, Tensor, get_default_dtype
from ..utils.seeding import DATA_SHUFFLE, derive_rng
from .classifiers import PlacementClassifier

logger = logging.getLogger(__name__)

STOP_PATIENCE = "patience"
STOP_MAX_EPOCHS = "max_epochs"
STOP_INTERRUPTED = "interrupted"


@dataclass(frozen=True)
class TrainSpec:
    learning_rate: float = 1e-3
    weight_decay: float = 1e-5
    decoupled: bool = False
    batch_size: int = 64
    max_epochs: int = 200
    patience: int = 10
    split: Tuple[float, float, float] = (0.7, 0.15, 0.15)
    seed: int = 0
    nonfinite: str = "trap"

    def validate(self) -> None:
        if abs(sum(self.split) - 1.0) > 1e-9 or any(f <= 0 for f in self.split):
            raise TrainingError("Split fractions must be positive and sum to 1", details={"split": list(self.split)})
        if self.learning_rate <= 0 or self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise TrainingError("Classifier training settings must be positive", details=self.__dict__.copy())


@dataclass
class ClassifierTrainResult:
    best_epoch: int
    best_val_loss: float
    epochs_run: int
    stop_reason: str
    history: List[Tuple[int, float, float]] = field(default_factory=list)


@dataclass
class ClassificationReport:
    """Accuracy in percent, per-class accuracy, and the confusion matrix (rows = true class)."""
    accuracy: float
    per_class: List[float]
    confusion: np.ndarray
    tag: str
    class_names: Tuple[str, ...] = ()

    @property
    def total(self) -> int:
        return int(self.confusion.sum())


def predict_logits(model: PlacementClassifier, inputs: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """Eval-mode logits; batches are independent, so the result does not depend on ``batch_size``."""
    was_training = model.training
    model.eval()
    try:
        parts = [model(Tensor(inputs[i:i + batch_size].astype(get_default_dtype()))).data
                 for i in range(0, inputs.shape[0], batch_size)]
    finally:
        model.train(was_training)
    return np.concatenate(parts, axis=0)


def _mean_loss(model: PlacementClassifier, inputs: np.ndarray, labels: np.ndarray, batch_size: int) -> float:
    logits = predict_logits(model, inputs, batch_size)
    return float(ops.cross_entropy(Tensor(logits.astype(np.float64)), labels).data)


def _require_all_classes(name: str, labels: np.ndarray, num_classes: int) -> None:
    missing = sorted(set(range(num_classes)) - set(np.unique(labels).tolist()))
    if missing:
        raise DataValidationError(f"Classes {missing} are missing from the {name} split",
                                  details={"split": name, "missing": missing})


def train_classifier(model: PlacementClassifier, train_x: np.ndarray, train_y: np.ndarray,
                     val_x: np.ndarray, val_y: np.ndarray, spec: TrainSpec,
                     should_stop: Optional[Callable[[], bool]] = None,
                     progress: bool = True) -> ClassifierTrainResult:
    """
    Minimize cross-entropy with Adam and early stopping on validation loss.

    The parameters and batch-norm statistics of the best validation epoch are
    restored before returning; ties keep the earlier epoch.

    Raises:
        DataValidationError: If a class is missing from the training or validation data
        TrainingError: If the training loss diverges
    """
    spec.validate()
    num_classes = model.config.num_classes
    _require_all_classes("train", train_y, num_classes)
    _require_all_classes("validation", val_y, num_classes)

    optimizer = Adam(model.named_parameters(), AdamHyperParams(lr=spec.learning_rate,
                                                              weight_decay=spec.weight_decay,
                                                              decoupled=spec.decoupled,
                                                              nonfinite=spec.nonfinite))
    params = optimizer.parameters
    best_state: Dict[str, np.ndarray] = model.state_dict()
    best_loss, best_epoch, since_best = np.inf, 0, 0
    history: List[Tuple[int, float, float]] = []
    stop_reason = STOP_MAX_EPOCHS

    bar = tqdm(range(spec.max_epochs), desc=f"{model.config.variant} classifier", unit="epoch",
               disable=not progress)
    for epoch in bar:
        if should_stop is not None and should_stop():
            stop_reason = STOP_INTERRUPTED
            break
        model.train()
        order = derive_rng(spec.seed, DATA_SHUFFLE, epoch).permutation(train_x.shape[0])
        total = 0.0
        for i in range(0, order.shape[0], spec.batch_size):
            idx = order[i:i + spec.batch_size]
            if idx.shape[0] < 2:
                continue
            with GradientTape() as tape:
                loss = ops.cross_entropy(model(Tensor(train_x[idx])), train_y[idx])
            if not np.isfinite(loss.item()):
                raise TrainingError(f"Classifier loss diverged at epoch {epoch + 1}", details={"epoch": epoch + 1})
            optimizer.step(tape.gradient(loss, params))
            total += loss.item() * idx.shape[0]
        train_loss = total / train_x.shape[0]
        val_loss = _mean_loss(model, val_x, val_y, spec.batch_size)
        history.append((epoch + 1, train_loss, val_loss))
        bar.set_postfix(train=f"{train_loss:.4f}", val=f"{val_loss:.4f}")
        logger.info(f"Epoch {epoch + 1}: train loss {train_loss:.5f}, validation loss {val_loss:.5f}")

        if val_loss < best_loss:
            best_loss, best_epoch, since_best = val_loss, epoch + 1, 0
            best_state = model.state_dict()
        else:
            since_best += 1
            if since_best >= spec.patience:
                stop_reason = STOP_PATIENCE
                break
    bar.close()

    model.load_state_dict(best_state)
    model.eval()
    logger.info(f"Restored epoch {best_epoch} (validation loss {best_loss:.5f}); stop reason: {stop_reason}")
    return ClassifierTrainResult(best_epoch=best_epoch, best_val_loss=float(best_loss),
                                 epochs_run=len(history), stop_reason=stop_reason, history=history)


def evaluate_classifier(model: PlacementClassifier, inputs: np.ndarray, labels: np.ndarray, tag: str,
                        class_names: Tuple[str, ...] = (), batch_size: int = 256) -> ClassificationReport:
    """Eval-mode accuracy report; per-class accuracy is NaN for classes without samples."""
    if inputs.shape[0] == 0:
        raise EvaluationError(f"Cannot evaluate on an empty {tag} dataset", details={"tag": tag})
    num_classes = model.config.num_classes
    labels = np.asarray(labels, dtype=np.int64)
    if labels.min() < 0 or labels.max() >= num_classes:
        raise EvaluationError("Labels outside the classifier's vocabulary",
                              details={"tag": tag, "num_classes": num_classes})
    predicted = predict_logits(model, inputs, batch_size).argmax(axis=1)
    confusion = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(confusion, (labels, predicted), 1)
    rows = confusion.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        per_class = np.where(rows > 0, 100.0 * np.diag(confusion) / rows, np.nan)
    accuracy = 100.0 * np.trace(confusion) / confusion.sum()
    return ClassificationReport(accuracy=float(accuracy), per_class=[float(v) for v in per_class],
                                confusion=confusion, tag=tag, class_names=tuple(class_names))
