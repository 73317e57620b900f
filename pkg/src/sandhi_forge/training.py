"""Training loops: seeded batching, parameter freezing, perplexity-gated
learning-rate decay, and resumable checkpoints.

The double-decoder model trains in two phases. The first teaches the
location decoder while the character decoder sits frozen; the second
teaches the character decoder while the location decoder sits frozen.
Embeddings, encoder, and attention weights stay live in both phases.
Single-decoder variants run one character phase. Every phase gets the
same per-phase budget; how many phases a variant runs is a property of
its architecture.

Every random draw derives from (seed, stream, epoch), never from loop
state, so a run resumed from any epoch checkpoint retraces the
uninterrupted run bit for bit.
"""

from __future__ import annotations

import functools
import json
import math
import os
import subprocess
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from . import autodiff as ad
from . import corpus
from . import model as mdl

PHASE_LOCATION = "location"
PHASE_CHARACTER = "character"
PHASE_SINGLE = "single"

# parameter groups receiving zero updates during each phase
FROZEN_GROUPS = {
    PHASE_LOCATION: ("character_decoder",),
    PHASE_CHARACTER: ("location_decoder",),
    PHASE_SINGLE: (),
}

# the target stream each phase optimizes and gates its decay on
PHASE_STREAM = {
    PHASE_LOCATION: "loc",
    PHASE_CHARACTER: "char",
    PHASE_SINGLE: "char",
}

_SHUFFLE_STREAM = 0
_DROPOUT_STREAM = 1

TRAIN_STATE_FILE = "train_state.json"


class Diverged(RuntimeError):
    """The training loss left the reals."""


class EmptyDataset(ValueError):
    pass


@dataclass
class TrainConfig:
    lr0: float = 1.0
    decay: float = 0.5
    batch_size: int = 64
    epochs: int = 10  # per phase
    seed: int = 0
    val_fraction: float = 0.1
    # None trains unclipped; small nets at lr 1.0 can spike early, and a
    # global-norm cap of 5 tames that without touching the steady state
    clip_norm: float | None = None

    def __post_init__(self):
        if not 0.0 < self.decay < 1.0:
            raise ValueError(f"decay {self.decay} outside (0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError(f"val_fraction {self.val_fraction} outside [0, 1)")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ValueError("clip_norm must be positive when set")


@dataclass
class PhaseState:
    """Progress of one phase; everything a resume needs besides the params."""

    phase: str
    frozen: tuple = ()
    lr: float = 1.0
    best_val_ppl: float = math.inf
    epoch: int = 0  # epochs completed within this phase
    epoch_offset: int = 0  # global index of the phase's first epoch, keys RNG streams
    lineage: tuple = ()  # phases completed before this one


@dataclass
class TrainResult:
    states: list
    records: list = field(default_factory=list)


def _rng(seed: int, stream: int, epoch: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, stream, epoch]))


# ---------------------------------------------------------------------------
# batching


def collate(examples, vocab) -> mdl.Batch:
    """Pad a list of examples into one Batch; widths are the batch maxima.

    Character inputs are the BOS-led target sequence, character targets the
    same sequence shifted one step left so each step predicts its successor.
    """
    if not examples:
        raise EmptyDataset("empty batch")
    enc = [corpus.encode_example(ex, vocab) for ex in examples]
    B = len(enc)
    T = max(len(e[0]) for e in enc)
    S = max(len(e[2]) for e in enc) - 1
    ids = np.full((B, T), vocab.pad_id, dtype=np.int64)
    lengths = np.zeros(B, dtype=np.int64)
    loc = np.zeros((B, T), dtype=np.int64)
    char_in = np.full((B, S), vocab.pad_id, dtype=np.int64)
    char_tg = np.full((B, S), vocab.pad_id, dtype=np.int64)
    char_m = np.zeros((B, S), dtype=np.float32)
    for b, (input_ids, loc_bits, chars) in enumerate(enc):
        L = len(input_ids)
        ids[b, :L] = input_ids
        lengths[b] = L
        loc[b, :L] = loc_bits
        k = len(chars) - 1
        char_in[b, :k] = chars[:-1]
        char_tg[b, :k] = chars[1:]
        char_m[b, :k] = 1.0
    return mdl.Batch(ids=ids, lengths=lengths, loc_targets=loc,
                     char_inputs=char_in, char_targets=char_tg, char_mask=char_m)


def make_batches(examples, batch_size: int, seed: int, epoch: int, vocab):
    """Seeded per-epoch reshuffle, then fixed-size chunks padded per batch.

    The same (seed, epoch) pair always yields the same batch order.
    """
    if not examples:
        raise EmptyDataset("nothing to batch")
    if batch_size < 1:
        raise ValueError("batch_size must be at least 1")
    order = _rng(seed, _SHUFFLE_STREAM, epoch).permutation(len(examples))
    for start in range(0, len(examples), batch_size):
        sel = order[start : start + batch_size]
        yield collate([examples[int(i)] for i in sel], vocab)


def eval_batches(examples, batch_size: int, vocab):
    """In-order chunks, no shuffle; for scoring and perplexity."""
    for start in range(0, len(examples), batch_size):
        yield collate(examples[start : start + batch_size], vocab)


# ---------------------------------------------------------------------------
# schedule pieces


def perplexity(model: mdl.SandhiModel, examples, stream: str = "char",
               batch_size: int = 64) -> float:
    """exp(mean per-token NLL) over one target stream, inference mode."""
    if not examples:
        raise EmptyDataset("perplexity over an empty dataset")
    if stream not in ("char", "loc"):
        raise ValueError(f"unknown stream {stream!r}")
    loss_fn = model.location_loss if stream == "loc" else model.character_loss
    total, tokens = 0.0, 0
    for batch in eval_batches(examples, batch_size, model.vocab):
        res = loss_fn(batch)
        total += res.total
        tokens += res.tokens
    try:
        return math.exp(total / tokens)
    except OverflowError:
        return math.inf


def lr_schedule_step(state: PhaseState, val_ppl: float, decay: float = 0.5) -> float:
    """Decay the rate when validation perplexity fails to improve.

    A tie counts as no improvement, as does a NaN measurement.
    """
    if math.isnan(val_ppl) or val_ppl >= state.best_val_ppl:
        state.lr *= decay
    else:
        state.best_val_ppl = val_ppl
    return state.lr


def trainable_parameters(model: mdl.SandhiModel, phase: str) -> list:
    frozen = set(FROZEN_GROUPS[phase])
    groups = [g for g in model.param_groups() if g not in frozen]
    return model.parameters(groups=groups)


def split_validation(examples, cfg: TrainConfig):
    """Carve a seeded validation slice out of the training set for the decay
    gate; test data never reaches the scheduler. Degenerate sizes fall back
    to gating on the training set itself."""
    if cfg.val_fraction == 0.0 or len(examples) < 2:
        return list(examples), list(examples)
    held = corpus.train_test_split(examples, ratio=1.0 - cfg.val_fraction, seed=cfg.seed)
    if not held.train or not held.test:
        return list(examples), list(examples)
    return held.train, held.test


# ---------------------------------------------------------------------------
# the phase loop


def train_phase(model: mdl.SandhiModel, examples, cfg: TrainConfig, phase: str, *,
                n_epochs: int | None = None, epoch_offset: int = 0,
                state: PhaseState | None = None, ckpt_dir=None, log_path=None):
    """Run one phase; returns (PhaseState, metric records).

    Freezing is structural: frozen groups are excluded from the optimizer
    step, and neither phase's loss touches its frozen decoder, so those
    tensors stay bit-identical. Passing a loaded `state` resumes at its
    recorded epoch and retraces the uninterrupted run exactly.
    """
    if phase not in FROZEN_GROUPS:
        raise ValueError(f"unknown phase {phase!r}")
    if phase == PHASE_LOCATION and not model.cfg.has_location_decoder:
        raise ValueError(f"variant {model.cfg.variant} has no location decoder")
    if not examples:
        raise EmptyDataset("nothing to train on")
    n_epochs = cfg.epochs if n_epochs is None else n_epochs
    if state is None:
        state = PhaseState(phase=phase, frozen=FROZEN_GROUPS[phase], lr=cfg.lr0,
                           epoch_offset=epoch_offset)
    elif state.phase != phase:
        raise ValueError(f"state belongs to the {state.phase} phase, not {phase}")
    train_ex, val_ex = split_validation(examples, cfg)
    stream = PHASE_STREAM[phase]
    loss_fn = model.location_loss if stream == "loc" else model.character_loss
    params = trainable_parameters(model, phase)
    records = []
    for e in range(state.epoch, n_epochs):
        t0 = time.perf_counter()
        g_epoch = state.epoch_offset + e
        drop_rng = _rng(cfg.seed, _DROPOUT_STREAM, g_epoch)
        total, tokens = 0.0, 0
        for batch in make_batches(train_ex, cfg.batch_size, cfg.seed, g_epoch, model.vocab):
            with ad.Tape():
                res = loss_fn(batch, training=True, rng=drop_rng)
                if not math.isfinite(res.total):
                    raise Diverged(f"non-finite {stream} loss in epoch {e + 1} "
                                   f"of the {phase} phase")
                ad.backward(res.mean)
            ad.sgd_step(params, lr=state.lr, clip_norm=cfg.clip_norm)
            total += res.total
            tokens += res.tokens
        val_ppl = perplexity(model, val_ex, stream=stream, batch_size=cfg.batch_size)
        rec = {"phase": phase, "epoch": e + 1, "lr": state.lr,
               "train_loss": total / tokens, "val_ppl": val_ppl,
               "wall_time": time.perf_counter() - t0}
        lr_schedule_step(state, val_ppl, cfg.decay)
        state.epoch = e + 1
        records.append(rec)
        if log_path is not None:
            _append_jsonl(log_path, rec)
        if ckpt_dir is not None:
            save_checkpoint(model, state, cfg, ckpt_dir)
    return state, records


def train_phase1(model, examples, cfg, **kw):
    """Location phase: character decoder frozen."""
    return train_phase(model, examples, cfg, PHASE_LOCATION, **kw)


def train_phase2(model, examples, cfg, **kw):
    """Character phase: location decoder frozen; encoder, attention, and
    embeddings keep fine-tuning. Meant to follow a completed phase 1."""
    kw.setdefault("epoch_offset", cfg.epochs)
    return train_phase(model, examples, cfg, PHASE_CHARACTER, **kw)


def train_model(model: mdl.SandhiModel, examples, cfg: TrainConfig, *,
                ckpt_dir=None, log_path=None) -> TrainResult:
    """Full schedule for the variant: two phases for the double decoder,
    otherwise a single character phase.  The per-phase budget is the same
    for every variant; how many phases a variant runs is a property of its
    architecture, not of the budget."""
    if model.cfg.has_location_decoder:
        d1 = os.path.join(ckpt_dir, "phase1") if ckpt_dir else None
        d2 = os.path.join(ckpt_dir, "phase2") if ckpt_dir else None
        s1, r1 = train_phase1(model, examples, cfg, ckpt_dir=d1, log_path=log_path)
        s2 = PhaseState(phase=PHASE_CHARACTER, frozen=FROZEN_GROUPS[PHASE_CHARACTER],
                        lr=cfg.lr0, epoch_offset=cfg.epochs, lineage=(PHASE_LOCATION,))
        s2, r2 = train_phase2(model, examples, cfg, state=s2, ckpt_dir=d2,
                              log_path=log_path)
        return TrainResult(states=[s1, s2], records=r1 + r2)
    d = os.path.join(ckpt_dir, "phase1") if ckpt_dir else None
    s, r = train_phase(model, examples, cfg, PHASE_SINGLE, ckpt_dir=d,
                       log_path=log_path)
    return TrainResult(states=[s], records=r)


def _append_jsonl(path, rec: dict) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(rec, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# checkpoints: the model's manifest/params pair plus a training-state file


@functools.lru_cache(maxsize=1)
def _code_version() -> str:
    here = os.path.dirname(os.path.abspath(__file__))
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"],
                             cwd=here, capture_output=True, text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return out.stdout.strip()
    except OSError:
        pass
    return __version__


def save_checkpoint(model: mdl.SandhiModel, state: PhaseState, cfg: TrainConfig,
                    path) -> None:
    mdl.save_checkpoint(model, path)
    blob = {
        "phase": state.phase,
        "frozen": list(state.frozen),
        "lr": state.lr,
        "best_val_ppl": None if math.isinf(state.best_val_ppl) else state.best_val_ppl,
        "epoch": state.epoch,
        "epoch_offset": state.epoch_offset,
        "lineage": list(state.lineage),
        "train_config": {
            "lr0": cfg.lr0, "decay": cfg.decay, "batch_size": cfg.batch_size,
            "epochs": cfg.epochs, "seed": cfg.seed, "val_fraction": cfg.val_fraction,
            "clip_norm": cfg.clip_norm,
        },
        "code_version": _code_version(),
    }
    with open(os.path.join(path, TRAIN_STATE_FILE), "w", encoding="utf-8") as fh:
        fh.write(json.dumps(blob, sort_keys=True, separators=(",", ":")))


def load_checkpoint(path):
    """Returns (model, PhaseState, TrainConfig) saved by save_checkpoint."""
    model = mdl.load_checkpoint(path)
    try:
        with open(os.path.join(path, TRAIN_STATE_FILE), encoding="utf-8") as fh:
            blob = json.load(fh)
    except OSError as e:
        raise mdl.CheckpointError(f"unreadable training state at {path}: {e}") from e
    try:
        state = PhaseState(
            phase=blob["phase"],
            frozen=tuple(blob["frozen"]),
            lr=float(blob["lr"]),
            best_val_ppl=math.inf if blob["best_val_ppl"] is None else float(blob["best_val_ppl"]),
            epoch=int(blob["epoch"]),
            epoch_offset=int(blob["epoch_offset"]),
            lineage=tuple(blob["lineage"]),
        )
        cfg = TrainConfig(**blob["train_config"])
    except (KeyError, TypeError, ValueError) as e:
        raise mdl.CheckpointError(f"malformed training state: {e}") from e
    return model, state, cfg
