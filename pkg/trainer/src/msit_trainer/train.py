"""Training and prediction over MSIT stacks.

Cross-entropy loss, SGD with the spec's momentum/weight decay, optional
per-epoch exponential learning-rate decay, and per-epoch reshuffling of the
sample order.  Pixels arrive already scaled to [0, 1] by the dataset.
Checkpoints are written atomically (temp file, then rename).  Bitwise
reproducibility is not promised across library builds; curve-level
reproducibility under a fixed seed is.
"""

from __future__ import annotations

import json
import logging
import os
import tempfile
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch.utils.data import DataLoader

from .containers import ChannelMismatch, ManifestEntry, StackDataset, write_predictions_csv
from .models import TrainSpec, build_model

log = logging.getLogger(__name__)


@dataclass
class EpochStats:
    epoch: int
    learning_rate: float
    train_loss: float
    train_accuracy: float
    holdout_logloss: float | None = None
    holdout_accuracy: float | None = None


@dataclass
class TrainResult:
    checkpoint_path: Path
    log_path: Path
    history: list[EpochStats]


def _evaluate(model, loader, device) -> tuple[float, float]:
    model.eval()
    losses, correct, count = [], 0, 0
    with torch.no_grad():
        for pixels, labels, _ids in loader:
            pixels, labels = pixels.to(device), labels.to(device)
            logits = model(pixels)
            losses.append(F.cross_entropy(logits, labels, reduction="sum").item())
            correct += (logits.argmax(dim=1) == labels).sum().item()
            count += len(labels)
    model.train()
    return sum(losses) / count, correct / count


def train(
    spec: TrainSpec,
    train_entries: list[ManifestEntry],
    holdout_entries: list[ManifestEntry] | None,
    stacks_dir: str | Path,
    out_dir: str | Path,
    seed: int = 0,
    early_stop_train_acc: float | None = None,
    device: str = "cpu",
) -> TrainResult:
    """Fine-tune with the given settings; writes ``model.pt`` and ``training_log.json``.

    ``early_stop_train_acc`` ends training once the running train accuracy
    reaches the threshold (the epoch budget still caps the run).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    torch.manual_seed(seed)

    data = StackDataset(train_entries, stacks_dir, require_labels=True)
    if data.channels != spec.in_channels:
        raise ChannelMismatch(
            f"stacks carry {data.channels} channels, spec says {spec.in_channels}"
        )
    loader = DataLoader(
        data,
        batch_size=spec.batch_size,
        shuffle=True,  # reshuffles every epoch
        generator=torch.Generator().manual_seed(seed),
    )
    holdout_loader = None
    if holdout_entries:
        holdout_loader = DataLoader(
            StackDataset(holdout_entries, stacks_dir, require_labels=True),
            batch_size=spec.batch_size,
        )

    model = build_model(spec).to(device)
    model.train()
    optimizer = torch.optim.SGD(
        model.parameters(),
        lr=spec.learning_rate,
        momentum=spec.momentum,
        weight_decay=spec.weight_decay,
    )
    scheduler = (
        torch.optim.lr_scheduler.ExponentialLR(optimizer, gamma=spec.lr_decay)
        if spec.lr_decay
        else None
    )

    history: list[EpochStats] = []
    for epoch in range(1, spec.epochs + 1):
        loss_sum, correct, count = 0.0, 0, 0
        for pixels, labels, _ids in loader:
            pixels, labels = pixels.to(device), labels.to(device)
            optimizer.zero_grad()
            logits = model(pixels)
            loss = F.cross_entropy(logits, labels)
            loss.backward()
            optimizer.step()
            loss_sum += loss.item() * len(labels)
            correct += (logits.argmax(dim=1) == labels).sum().item()
            count += len(labels)

        stats = EpochStats(
            epoch=epoch,
            learning_rate=optimizer.param_groups[0]["lr"],
            train_loss=loss_sum / count,
            train_accuracy=correct / count,
        )
        if holdout_loader is not None:
            stats.holdout_logloss, stats.holdout_accuracy = _evaluate(
                model, holdout_loader, device
            )
        if scheduler is not None:
            scheduler.step()
        history.append(stats)
        log.info(
            "epoch %d/%d: loss %.4f acc %.3f%s",
            epoch, spec.epochs, stats.train_loss, stats.train_accuracy,
            f" holdout logloss {stats.holdout_logloss:.4f}" if holdout_loader else "",
        )
        if early_stop_train_acc is not None and stats.train_accuracy >= early_stop_train_acc:
            break

    # Short runs leave the batch-norm running statistics far behind the
    # dataset statistics (the EMA only saw a handful of updates), which
    # wrecks eval-mode inference; recalibrate them with one exact pass.
    torch.optim.swa_utils.update_bn(loader, model)

    checkpoint_path = out_dir / "model.pt"
    _atomic_save(
        {"state_dict": model.state_dict(), "spec": asdict(spec)}, checkpoint_path
    )
    log_path = out_dir / "training_log.json"
    log_path.write_text(json.dumps([asdict(s) for s in history], indent=2) + "\n")
    return TrainResult(checkpoint_path, log_path, history)


def _atomic_save(payload: dict, path: Path) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            torch.save(payload, fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path: str | Path) -> tuple[torch.nn.Module, TrainSpec]:
    payload = torch.load(path, map_location="cpu", weights_only=True)
    spec = TrainSpec(**payload["spec"])
    model = build_model(spec)
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, spec


def predict(
    checkpoint_path: str | Path,
    entries: list[ManifestEntry],
    stacks_dir: str | Path,
    out_csv: str | Path,
    batch_size: int = 64,
    device: str = "cpu",
) -> np.ndarray:
    """Softmax probabilities for every manifest entry, in manifest order.

    Raises:
        ChannelMismatch: checkpoint and stacks disagree on channel count.
    """
    model, spec = load_checkpoint(checkpoint_path)
    data = StackDataset(entries, stacks_dir, require_labels=False)
    if data.channels != spec.in_channels:
        raise ChannelMismatch(
            f"stacks carry {data.channels} channels, checkpoint wants {spec.in_channels}"
        )
    model = model.to(device)
    loader = DataLoader(data, batch_size=batch_size)
    ids: list[str] = []
    probs: list[np.ndarray] = []
    with torch.no_grad():
        for pixels, _labels, batch_ids in loader:
            logits = model(pixels.to(device))
            probs.append(torch.softmax(logits, dim=1).cpu().numpy())
            ids.extend(batch_ids)
    matrix = np.concatenate(probs, axis=0)
    write_predictions_csv(out_csv, ids, matrix)
    return matrix
