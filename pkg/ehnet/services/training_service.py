"""Training harness: seeded crops and minibatches, AdaDelta, validation-based best snapshot, resume"""

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ehnet.core.exceptions import InputDataError, NumericError
from ehnet.core.logging import LoggerMixin, log_execution_time
from ehnet.models.schemas import ArchitectureConfig, StftConfig, TrainConfig, TrainLogRecord
from ehnet.models.tensors import GradientSet, ModelParams, Waveform
from ehnet.services.backprop_service import backward, mse_loss
from ehnet.services.dsp_service import stft
from ehnet.services.model_service import forward, forward_with_cache, init_params
from ehnet.services.optimizer_service import LearningRateSchedule, OptimizerState, adadelta_step
from ehnet.utils.checkpoint import load_checkpoint, save_checkpoint
from ehnet.utils.manifest_io import read_index
from ehnet.utils.wav_io import read_wav

BEST_CHECKPOINT = "best.ehn"
LAST_CHECKPOINT = "last.ehn"
TRAIN_LOG = "train_log.jsonl"

PRECISION_DTYPES = {"single": np.float32, "double": np.float64}


@dataclass
class UtterancePair:
    """Noisy input and clean target magnitudes, both d x t"""

    id: str
    noisy: np.ndarray
    clean: np.ndarray

    def __post_init__(self) -> None:
        if self.noisy.shape != self.clean.shape:
            raise InputDataError("noisy and clean spectrograms differ in shape",
                                 id=self.id, noisy=self.noisy.shape, clean=self.clean.shape)

    @property
    def frames(self) -> int:
        return int(self.noisy.shape[1])


@dataclass
class TrainResult:
    best_params: ModelParams
    best_val_loss: float
    final_params: ModelParams
    final_val_loss: float
    log: List[TrainLogRecord] = field(default_factory=list)

    def epoch_losses(self) -> List[float]:
        return [record.train_loss for record in self.log]


def load_pairs(index_path: Path, stft_cfg: StftConfig) -> List[UtterancePair]:
    """STFT magnitudes of every (noisy, clean) pair listed in a corpus index"""
    pairs = []
    for entry in read_index(index_path):
        noisy = stft(read_wav(entry.noisy_path), stft_cfg)
        clean = stft(read_wav(entry.clean_path), stft_cfg)
        pairs.append(UtterancePair(id=entry.pair_id, noisy=noisy.magnitudes, clean=clean.magnitudes))
    return pairs


def pairs_from_waveforms(items: Sequence[Tuple[str, Waveform, Waveform]], stft_cfg: StftConfig) -> List[UtterancePair]:
    return [
        UtterancePair(id=pid, noisy=stft(noisy, stft_cfg).magnitudes, clean=stft(clean, stft_cfg).magnitudes)
        for pid, noisy, clean in items
    ]


def crop_pair(pair: UtterancePair, length: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Random crop of `length` frames; shorter utterances are zero-padded and masked"""
    frames = pair.frames
    if frames >= length:
        start = int(rng.integers(0, frames - length + 1))
        window = slice(start, start + length)
        return pair.noisy[:, window], pair.clean[:, window], np.ones(length)
    pad = ((0, 0), (0, length - frames))
    mask = np.concatenate([np.ones(frames), np.zeros(length - frames)])
    return np.pad(pair.noisy, pad), np.pad(pair.clean, pad), mask


def utterance_gradient(
    params: ModelParams, x: np.ndarray, y: np.ndarray, mask: Optional[np.ndarray], scale: float
) -> Tuple[float, GradientSet]:
    """Loss and private GradientSet for one utterance"""
    prediction, cache = forward_with_cache(x, params)
    loss = mse_loss(prediction, y, mask)
    return loss, backward(cache, y, scale=scale, frame_mask=mask)


def evaluate_loss(params: ModelParams, pairs: Sequence[UtterancePair], feature_scale: float = 1.0) -> float:
    """Mean full-length per-utterance loss (batch size 1)"""
    losses = [
        mse_loss(forward(pair.noisy * feature_scale, params), pair.clean * feature_scale)
        for pair in pairs
    ]
    return math.fsum(losses) / len(losses)


class TrainingLogWriter:
    """JSON-lines training log; a fresh run starts from an empty file, a resumed one appends"""

    def __init__(self, path: Optional[Path], fresh: bool = True):
        self.path = path
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            if fresh:
                path.write_text("", encoding="utf-8")

    def append(self, record: TrainLogRecord) -> None:
        if self.path is None:
            return
        with self.path.open("a", encoding="utf-8") as fh:
            fh.write(record.model_dump_json() + "\n")


def read_training_log(path: Path) -> List[TrainLogRecord]:
    lines = path.read_text(encoding="utf-8").splitlines()
    return [TrainLogRecord.model_validate_json(line) for line in lines if line.strip()]


class Trainer(LoggerMixin):
    """Runs the training protocol for one model replica"""

    def __init__(
        self,
        arch: ArchitectureConfig,
        cfg: TrainConfig,
        stft_cfg: Optional[StftConfig] = None,
        out_dir: Optional[Path] = None,
    ):
        super().__init__()
        self.arch = arch
        self.cfg = cfg
        self.stft_cfg = stft_cfg or StftConfig()
        self.out_dir = out_dir
        self.schedule = LearningRateSchedule(cfg.schedule)
        self.dtype = np.dtype(PRECISION_DTYPES[cfg.precision])

    def _path(self, name: str) -> Optional[Path]:
        return None if self.out_dir is None else self.out_dir / name

    def _scaled(self, pairs: Sequence[UtterancePair]) -> List[UtterancePair]:
        s = self.arch.feature_scale
        if s == 1.0:
            return list(pairs)
        return [UtterancePair(id=p.id, noisy=p.noisy * s, clean=p.clean * s) for p in pairs]

    def _batch_gradient(
        self, params: ModelParams, batch: List[Tuple[np.ndarray, np.ndarray, np.ndarray]], pool: Optional[ThreadPoolExecutor]
    ) -> Tuple[float, GradientSet]:
        scale = 1.0 / len(batch)
        jobs = [(params, x, y, mask, scale) for x, y, mask in batch]
        if pool is None:
            results = [utterance_gradient(*job) for job in jobs]
        else:
            results = list(pool.map(lambda job: utterance_gradient(*job), jobs))
        # reduce in utterance order so the sum does not depend on worker scheduling
        total = GradientSet.zeros_like(params)
        for _, grads in results:
            total.add_(grads)
        return math.fsum(loss for loss, _ in results) / len(results), total

    def _resume_state(self) -> Optional[Tuple[ModelParams, OptimizerState, int, ModelParams, float]]:
        last_path, best_path = self._path(LAST_CHECKPOINT), self._path(BEST_CHECKPOINT)
        if last_path is None or not last_path.is_file():
            return None
        last = load_checkpoint(last_path)
        params = last.params.astype(self.dtype)
        state = last.optimizer or OptimizerState.for_params(params, self.cfg.rho, self.cfg.eps)
        best_val = float(last.meta.get("best_val_loss", "inf"))
        best = load_checkpoint(best_path).params.astype(self.dtype) if best_path and best_path.is_file() else params.copy()
        return params, state, int(last.meta.get("epoch", "-1")) + 1, best, best_val

    @log_execution_time("train")
    def train(
        self,
        train_set: Sequence[UtterancePair],
        val_set: Sequence[UtterancePair],
        params: Optional[ModelParams] = None,
        resume: bool = False,
    ) -> TrainResult:
        if not train_set:
            raise InputDataError("empty dataset", split="train")
        if not val_set:
            raise InputDataError("empty dataset", split="validation")
        cfg = self.cfg
        train_pairs, val_pairs = self._scaled(train_set), self._scaled(val_set)

        start_epoch, best_val = 0, math.inf
        resumed = self._resume_state() if resume else None
        if resumed is not None:
            params, state, start_epoch, best_params, best_val = resumed
            self.log_info("resuming", epoch=start_epoch, best_val_loss=best_val)
        else:
            if params is None:
                params = init_params(self.arch, seed=cfg.seed, dtype=self.dtype)
            else:
                params = params.astype(self.dtype)
            state = OptimizerState.for_params(params, cfg.rho, cfg.eps)
            best_params = params.copy()

        writer = TrainingLogWriter(self._path(TRAIN_LOG), fresh=resumed is None)
        log: List[TrainLogRecord] = []
        step = state.steps
        stale = 0
        val_loss = math.nan
        started = time.perf_counter()
        pool = ThreadPoolExecutor(max_workers=cfg.workers) if cfg.workers > 1 else None
        try:
            for epoch in range(start_epoch, cfg.epochs):
                multiplier = self.schedule.multiplier(epoch)
                rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([cfg.seed, epoch])))
                order = rng.permutation(len(train_pairs))
                batch_losses = []
                for first in range(0, len(order), cfg.batch_size):
                    batch = [crop_pair(train_pairs[i], cfg.crop_length, rng)
                             for i in order[first:first + cfg.batch_size]]
                    loss, grads = self._batch_gradient(params, batch, pool)
                    if not math.isfinite(loss):
                        self.log_error("non-finite training loss", epoch=epoch, step=step)
                        raise NumericError("NaN loss", epoch=epoch, step=step)
                    adadelta_step(params, grads, state, multiplier)
                    batch_losses.append(loss)
                    step += 1

                train_loss = math.fsum(batch_losses) / len(batch_losses)
                validated = (epoch + 1) % cfg.val_every == 0 or epoch == cfg.epochs - 1
                record_val: Optional[float] = None
                if validated:
                    val_loss = evaluate_loss(params, val_pairs)
                    if not math.isfinite(val_loss):
                        raise NumericError("NaN loss", epoch=epoch, split="validation")
                    record_val = val_loss
                    if val_loss < best_val:
                        best_val, stale = val_loss, 0
                        best_params = params.copy()
                        self._save(BEST_CHECKPOINT, best_params, epoch, best_val, None)
                    else:
                        stale += 1

                record = TrainLogRecord(
                    epoch=epoch, step=step, train_loss=train_loss, val_loss=record_val,
                    lr_multiplier=multiplier,
                    wall_time_ms=round((time.perf_counter() - started) * 1000.0, 3),
                )
                log.append(record)
                writer.append(record)
                self._save(LAST_CHECKPOINT, params, epoch, best_val, state)
                self.log_info("epoch finished", epoch=epoch, train_loss=train_loss,
                              val_loss=record_val, lr_multiplier=multiplier)

                if cfg.patience and stale >= cfg.patience:
                    self.log_info("early stopping", epoch=epoch, best_val_loss=best_val)
                    break
        finally:
            if pool is not None:
                pool.shutdown()

        if not math.isfinite(best_val):
            best_val = evaluate_loss(best_params, val_pairs)
        return TrainResult(best_params=best_params, best_val_loss=best_val, final_params=params,
                           final_val_loss=val_loss, log=log)

    def _save(self, name: str, params: ModelParams, epoch: int, best_val: float,
              state: Optional[OptimizerState]) -> None:
        path = self._path(name)
        if path is None:
            return
        save_checkpoint(path, params, self.stft_cfg,
                        meta={"epoch": epoch, "best_val_loss": best_val}, optimizer=state)
