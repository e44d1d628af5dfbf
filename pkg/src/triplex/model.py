"""The dual-framework network: one shared encoder, three decoders (predicate,
triplet, text), a weighted joint loss, and the training loop.

The reference backbone is ``scratch-small`` (2 encoder blocks, 2 decoder
blocks, width 128) which is small enough to train on a laptop CPU; the
``pretrained-adapter`` backbone defines the interface for dropping in external
encoder-decoder checkpoints but ships no weights.
"""

from __future__ import annotations

import copy
import json
import logging
import math
import random
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import torch
import torch.nn as nn

from .data import ExtractionInstance, TrainingPair, make_training_pairs
from .grammar import SPECIAL_TOKENS, SerializedSeq

logger = logging.getLogger(__name__)

OBJECTIVES = ("P", "T", "S")
_TARGET_KIND = {"P": "y_P", "T": "y_T", "S": "y_S"}


class ModelError(RuntimeError):
    pass


class SourceTooLong(ModelError):
    pass


class DivergenceDetected(ModelError):
    def __init__(self, msg: str, checkpoint: "str | None" = None):
        super().__init__(msg)
        self.checkpoint = checkpoint


@dataclass(frozen=True)
class ModelConfig:
    """Hyperparameters. The defaults are the scratch-small reference setup;
    alpha/beta/gamma, the optimizer, learning rate and batch size follow the
    published recipe."""

    n_encoder_blocks: int = 2
    n_decoder_blocks: int = 2
    hidden: int = 128
    heads: int = 4
    ffn: int = 256
    dropout: float = 0.1
    max_src_len: int = 96
    max_tgt_len: int = 96
    alpha: float = 0.4
    beta: float = 0.2
    gamma: float = 0.6
    lr: float = 2e-5
    batch_size: int = 32
    seed: int = 0
    backbone: str = "scratch-small"
    loss_reduction: str = "mean"
    tie_embeddings: bool = True
    clip_norm: float = 1.0
    vocab_size: int | None = None

    def __post_init__(self) -> None:
        if min(self.n_encoder_blocks, self.n_decoder_blocks, self.hidden,
               self.heads, self.ffn, self.max_src_len, self.max_tgt_len) <= 0:
            raise ModelError("all model dimensions must be positive")
        if self.alpha < 0 or self.beta < 0 or self.gamma < 0:
            raise ModelError("loss coefficients must be non-negative")
        if self.alpha + self.beta + self.gamma <= 0:
            raise ModelError("at least one loss coefficient must be positive")
        if self.loss_reduction not in ("mean", "sum"):
            raise ModelError(f"unknown loss_reduction {self.loss_reduction!r}")
        if self.backbone not in ("scratch-small", "pretrained-adapter"):
            raise ModelError(f"unknown backbone {self.backbone!r}")


class Vocab:
    """Token-id adapter. Ids 0..3 are pad/bos/eos/unk, the eight grammar
    markers get the next dedicated ids, corpus tokens follow sorted."""

    PAD, BOS, EOS, UNK = "<pad>", "<bos>", "<eos>", "<unk>"

    def __init__(self, tokens: Sequence[str]):
        base = [self.PAD, self.BOS, self.EOS, self.UNK, *SPECIAL_TOKENS]
        extra = sorted(set(tokens) - set(base))
        self._itos = base + extra
        self._stoi = {t: i for i, t in enumerate(self._itos)}
        self.pad_id = self._stoi[self.PAD]
        self.bos_id = self._stoi[self.BOS]
        self.eos_id = self._stoi[self.EOS]
        self.unk_id = self._stoi[self.UNK]

    def __len__(self) -> int:
        return len(self._itos)

    @staticmethod
    def build(pairs: Iterable[TrainingPair]) -> "Vocab":
        tokens: set[str] = set()
        for p in pairs:
            tokens.update(p.source.tokens)
            tokens.update(p.target.tokens)
        return Vocab(sorted(tokens))

    @staticmethod
    def build_from_instances(instances: Iterable[ExtractionInstance]) -> "Vocab":
        pairs: list[TrainingPair] = []
        for inst in instances:
            pairs.extend(make_training_pairs(inst))
        return Vocab.build(pairs)

    def encode(self, tokens: Sequence[str]) -> list[int]:
        return [self._stoi.get(t, self.unk_id) for t in tokens]

    def decode(self, ids: Sequence[int]) -> list[str]:
        drop = {self.pad_id, self.bos_id, self.eos_id}
        return [self._itos[i] for i in ids if i not in drop]

    def tokens(self) -> list[str]:
        return list(self._itos)


@dataclass
class EncoderStates:
    """Per-source-token hidden vectors plus the padding mask used to get them."""

    states: torch.Tensor      # (batch, src_len, hidden)
    pad_mask: torch.Tensor    # (batch, src_len), True at padding


@dataclass
class LossBreakdown:
    l_p: float
    l_t: float
    l_s: float
    alpha: float
    beta: float
    gamma: float

    @property
    def s_to_t(self) -> float:
        return self.alpha * self.l_p + self.beta * self.l_t

    @property
    def t_to_s(self) -> float:
        return self.gamma * self.l_s

    @property
    def total(self) -> float:
        return self.s_to_t + self.t_to_s


def _sinusoidal(max_len: int, dim: int) -> torch.Tensor:
    pos = torch.arange(max_len).unsqueeze(1).float()
    div = torch.exp(torch.arange(0, dim, 2).float() * (-math.log(10000.0) / dim))
    pe = torch.zeros(max_len, dim)
    pe[:, 0::2] = torch.sin(pos * div)
    pe[:, 1::2] = torch.cos(pos * div)
    return pe.unsqueeze(0)


class DualModel(nn.Module):
    """Shared encoder with three objective-specific decoders.

    The encoder parameters (including the shared input embedding) are one
    storage used by all three objectives; decoder parameter groups are
    pairwise disjoint.
    """

    def __init__(self, cfg: ModelConfig, vocab: Vocab):
        super().__init__()
        if cfg.backbone == "pretrained-adapter":
            raise ModelError(
                "the pretrained-adapter backbone defines an interface only; "
                "no weights ship with this package (see PretrainedAdapter)"
            )
        torch.manual_seed(cfg.seed)
        self.cfg = replace(cfg, vocab_size=len(vocab))
        self.vocab = vocab
        d = cfg.hidden
        self.embedding = nn.Embedding(len(vocab), d, padding_idx=vocab.pad_id)
        if not cfg.tie_embeddings:
            self.dec_embeddings = nn.ModuleDict({
                k: nn.Embedding(len(vocab), d, padding_idx=vocab.pad_id)
                for k in OBJECTIVES
            })
        else:
            self.dec_embeddings = None
        # Keep sqrt(d)-scaled embeddings at unit variance so the sinusoidal
        # position signal is not drowned out.
        for table in [self.embedding] + (
                list(self.dec_embeddings.values()) if self.dec_embeddings else []):
            nn.init.normal_(table.weight, std=d ** -0.5)
            with torch.no_grad():
                table.weight[vocab.pad_id].zero_()
        self.register_buffer(
            "pos", _sinusoidal(max(cfg.max_src_len, cfg.max_tgt_len) + 8, d)
        )
        self.encoder = nn.TransformerEncoder(
            nn.TransformerEncoderLayer(d, cfg.heads, cfg.ffn, cfg.dropout,
                                       batch_first=True),
            cfg.n_encoder_blocks,
            enable_nested_tensor=False,
        )
        self.decoders = nn.ModuleDict({
            k: nn.TransformerDecoder(
                nn.TransformerDecoderLayer(d, cfg.heads, cfg.ffn, cfg.dropout,
                                           batch_first=True),
                cfg.n_decoder_blocks,
            )
            for k in OBJECTIVES
        })
        self.out_proj = nn.ModuleDict({
            k: nn.Linear(d, len(vocab)) for k in OBJECTIVES
        })
        self.scale = math.sqrt(d)
        # Per-objective decoder invocation counters (one increment per
        # sequence decoded, regardless of how many triplets it carries).
        self.decode_invocations = {k: 0 for k in OBJECTIVES}

    # -- parameter bookkeeping -------------------------------------------

    def parameter_groups(self) -> dict[str, list[nn.Parameter]]:
        groups: dict[str, list[nn.Parameter]] = {
            "encoder": list(self.embedding.parameters()) + list(self.encoder.parameters()),
        }
        for k in OBJECTIVES:
            params = list(self.decoders[k].parameters()) + list(self.out_proj[k].parameters())
            if self.dec_embeddings is not None:
                params += list(self.dec_embeddings[k].parameters())
            groups[k] = params
        return groups

    # -- encoding / decoding ---------------------------------------------

    def _embed(self, ids: torch.Tensor, which: str | None = None) -> torch.Tensor:
        table = self.embedding
        if which is not None and self.dec_embeddings is not None:
            table = self.dec_embeddings[which]
        return table(ids) * self.scale + self.pos[:, : ids.size(1)]

    def encode_ids(self, src_ids: torch.Tensor, pad_mask: torch.Tensor) -> EncoderStates:
        states = self.encoder(self._embed(src_ids), src_key_padding_mask=pad_mask)
        return EncoderStates(states, pad_mask)

    def encode(self, src: "SerializedSeq | Sequence[str]") -> EncoderStates:
        tokens = src.tokens if isinstance(src, SerializedSeq) else tuple(src)
        if len(tokens) > self.cfg.max_src_len:
            raise SourceTooLong(f"source length {len(tokens)} > {self.cfg.max_src_len}")
        ids = torch.tensor([self.vocab.encode(tokens)], dtype=torch.long)
        pad = torch.zeros_like(ids, dtype=torch.bool)
        return self.encode_ids(ids, pad)

    def _decoder_logits(self, which: str, enc: EncoderStates,
                        tgt_ids: torch.Tensor) -> torch.Tensor:
        t = tgt_ids.size(1)
        causal = torch.triu(
            torch.ones(t, t, dtype=torch.bool, device=tgt_ids.device), diagonal=1
        )
        out = self.decoders[which](
            self._embed(tgt_ids, which), enc.states,
            tgt_mask=causal,
            tgt_key_padding_mask=tgt_ids.eq(self.vocab.pad_id),
            memory_key_padding_mask=enc.pad_mask,
        )
        return self.out_proj[which](out)

    @torch.no_grad()
    def _greedy_batch(self, which: str, enc: EncoderStates, max_len: int
                      ) -> list[tuple[list[int], bool]]:
        bsz = enc.states.size(0)
        ys = torch.full((bsz, 1), self.vocab.bos_id, dtype=torch.long)
        finished = torch.zeros(bsz, dtype=torch.bool)
        for _ in range(max_len):
            logits = self._decoder_logits(which, enc, ys)[:, -1]
            nxt = torch.topk(logits, 1, dim=-1).indices.squeeze(-1)
            nxt = torch.where(finished, torch.full_like(nxt, self.vocab.pad_id), nxt)
            ys = torch.cat([ys, nxt.unsqueeze(1)], dim=1)
            finished |= nxt.eq(self.vocab.eos_id)
            if bool(finished.all()):
                break
        out = []
        for b in range(bsz):
            ids = ys[b, 1:].tolist()
            if self.vocab.eos_id in ids:
                ids = ids[: ids.index(self.vocab.eos_id)]
                out.append((ids, False))
            else:
                out.append(([i for i in ids if i != self.vocab.pad_id], True))
        return out

    @torch.no_grad()
    def _beam_one(self, which: str, enc: EncoderStates, max_len: int, k: int
                  ) -> tuple[list[int], bool]:
        # enc holds a single item; hypotheses share the expanded memory.
        beams: list[tuple[float, list[int], bool]] = [(0.0, [self.vocab.bos_id], False)]
        for _ in range(max_len):
            if all(done for _, _, done in beams):
                break
            candidates: list[tuple[float, list[int], bool]] = []
            for score, ids, done in beams:
                if done:
                    candidates.append((score, ids, done))
                    continue
                ys = torch.tensor([ids], dtype=torch.long)
                logits = self._decoder_logits(which, enc, ys)[0, -1]
                logp = torch.log_softmax(logits, dim=-1)
                top = torch.topk(logp, k)
                for lp, tid in zip(top.values.tolist(), top.indices.tolist()):
                    candidates.append(
                        (score + lp, ids + [tid], tid == self.vocab.eos_id)
                    )
            candidates.sort(key=lambda c: (-c[0], len(c[1])))
            beams = candidates[:k]
        best = max(beams, key=lambda c: c[0])
        ids = best[1][1:]
        truncated = not best[2]
        if ids and ids[-1] == self.vocab.eos_id:
            ids = ids[:-1]
        return ids, truncated

    def generate(
        self,
        which: str,
        sources: Sequence[Sequence[str]],
        strategy: str = "greedy",
        beam_size: int = 4,
        max_len: int | None = None,
    ) -> list[tuple[list[str], bool]]:
        """Decode token sequences for a batch of sources.

        Returns (tokens, truncated) per source; truncated means generation
        hit max_len before end-of-sequence.
        """
        if which not in OBJECTIVES:
            raise ModelError(f"unknown decoder {which!r}")
        if not sources:
            return []
        max_len = max_len or self.cfg.max_tgt_len
        was_training = self.training
        self.eval()
        try:
            for toks in sources:
                if len(toks) > self.cfg.max_src_len:
                    raise SourceTooLong(
                        f"source length {len(toks)} > {self.cfg.max_src_len}")
            self.decode_invocations[which] += len(sources)
            if strategy == "greedy":
                width = max(len(t) for t in sources)
                ids = torch.full((len(sources), width), self.vocab.pad_id, dtype=torch.long)
                for b, toks in enumerate(sources):
                    ids[b, : len(toks)] = torch.tensor(self.vocab.encode(toks))
                enc = self.encode_ids(ids, ids.eq(self.vocab.pad_id))
                raw = self._greedy_batch(which, enc, max_len)
            elif strategy == "beam":
                raw = []
                for toks in sources:
                    enc = self.encode(list(toks))
                    raw.append(self._beam_one(which, enc, max_len, beam_size))
            else:
                raise ModelError(f"unknown decoding strategy {strategy!r}")
            return [(self.vocab.decode(ids), trunc) for ids, trunc in raw]
        finally:
            if was_training:
                self.train()


def decode_sequence(
    model: DualModel,
    which: str,
    enc: "EncoderStates | SerializedSeq | Sequence[str]",
    decoding: str = "greedy",
    beam_size: int = 4,
    max_len: int | None = None,
) -> tuple[SerializedSeq, bool]:
    """Decode one sequence with the selected decoder; stops at end-of-sequence
    or max_len (the flag reports truncation)."""
    max_len = max_len or model.cfg.max_tgt_len
    was_training = model.training
    model.eval()
    try:
        if not isinstance(enc, EncoderStates):
            enc = model.encode(enc)
        model.decode_invocations[which] += 1
        if decoding == "greedy":
            ids, truncated = model._greedy_batch(which, enc, max_len)[0]
        elif decoding == "beam":
            ids, truncated = model._beam_one(which, enc, max_len, beam_size)
        else:
            raise ModelError(f"unknown decoding strategy {decoding!r}")
    finally:
        if was_training:
            model.train()
    return SerializedSeq(tuple(model.vocab.decode(ids)), _TARGET_KIND[which]), truncated


# ---------------------------------------------------------------------------
# Losses.

def _pad_batch(vocab: Vocab, seqs: list[list[int]], width: int | None = None
               ) -> torch.Tensor:
    width = width or max(len(s) for s in seqs)
    out = torch.full((len(seqs), width), vocab.pad_id, dtype=torch.long)
    for i, s in enumerate(seqs):
        out[i, : len(s)] = torch.tensor(s, dtype=torch.long)
    return out


def objective_loss(model: DualModel, objective: str, pairs: Sequence[TrainingPair]
                   ) -> torch.Tensor:
    """Teacher-forced token cross-entropy for one objective over a batch."""
    if not pairs:
        return torch.zeros(())
    cfg = model.cfg
    vocab = model.vocab
    srcs, tgt_in, tgt_out = [], [], []
    for p in pairs:
        if p.objective != objective:
            raise ModelError(f"pair objective {p.objective} != {objective}")
        if len(p.source.tokens) > cfg.max_src_len:
            raise SourceTooLong(f"source length {len(p.source.tokens)} > {cfg.max_src_len}")
        if len(p.target.tokens) + 1 > cfg.max_tgt_len:
            raise SourceTooLong(f"target length {len(p.target.tokens)} + 1 > {cfg.max_tgt_len}")
        s = vocab.encode(p.source.tokens)
        t = vocab.encode(p.target.tokens)
        srcs.append(s)
        tgt_in.append([vocab.bos_id] + t)
        tgt_out.append(t + [vocab.eos_id])
    src_ids = _pad_batch(vocab, srcs)
    enc = model.encode_ids(src_ids, src_ids.eq(vocab.pad_id))
    in_ids = _pad_batch(vocab, tgt_in)
    out_ids = _pad_batch(vocab, tgt_out)
    logits = model._decoder_logits(objective, enc, in_ids)
    flat = logits.reshape(-1, logits.size(-1))
    loss = nn.functional.cross_entropy(
        flat, out_ids.reshape(-1), ignore_index=vocab.pad_id, reduction="sum"
    )
    if model.cfg.loss_reduction == "mean":
        n_tokens = int(out_ids.ne(vocab.pad_id).sum())
        loss = loss / max(n_tokens, 1)
    return loss


def _group_pairs(pairs: Iterable[TrainingPair]) -> dict[str, list[TrainingPair]]:
    grouped: dict[str, list[TrainingPair]] = {k: [] for k in OBJECTIVES}
    for p in pairs:
        grouped[p.objective].append(p)
    return grouped


def loss_tensors(model: DualModel, pairs: Iterable[TrainingPair],
                 skip_zero_coef: bool = True) -> dict[str, torch.Tensor]:
    """Per-objective loss tensors for one batch of training pairs.

    With skip_zero_coef, objectives whose coefficient is zero are computed
    without gradient tracking, which removes them from the graph exactly.
    """
    cfg = model.cfg
    coef = {"P": cfg.alpha, "T": cfg.beta, "S": cfg.gamma}
    grouped = _group_pairs(pairs)
    out: dict[str, torch.Tensor] = {}
    for k in OBJECTIVES:
        if skip_zero_coef and coef[k] == 0:
            with torch.no_grad():
                out[k] = objective_loss(model, k, grouped[k])
        else:
            out[k] = objective_loss(model, k, grouped[k])
    return out


def combine_losses(cfg: ModelConfig, losses: Mapping[str, torch.Tensor]) -> torch.Tensor:
    """Total = alpha*L_P + beta*L_T + gamma*L_S; zero coefficients drop the term."""
    total = torch.zeros(())
    for k, c in (("P", cfg.alpha), ("T", cfg.beta), ("S", cfg.gamma)):
        if c != 0:
            total = total + c * losses[k]
    return total


def compute_losses(model: DualModel, pairs: Iterable[TrainingPair]) -> LossBreakdown:
    """LossBreakdown over one batch (no gradients retained)."""
    with torch.no_grad():
        losses = loss_tensors(model, pairs, skip_zero_coef=False)
    cfg = model.cfg
    return LossBreakdown(
        l_p=float(losses["P"]), l_t=float(losses["T"]), l_s=float(losses["S"]),
        alpha=cfg.alpha, beta=cfg.beta, gamma=cfg.gamma,
    )


# ---------------------------------------------------------------------------
# Checkpoints.

def save_checkpoint(model: DualModel, out_dir: "str | Path") -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(asdict(model.cfg), indent=2))
    (out / "vocab.txt").write_text(
        "\n".join(model.vocab.tokens()) + "\n", encoding="utf-8")
    torch.save(model.state_dict(), out / "weights.pt")
    return out


def load_checkpoint(path: "str | Path") -> DualModel:
    path = Path(path)
    cfg = ModelConfig(**json.loads((path / "config.json").read_text()))
    tokens = (path / "vocab.txt").read_text(encoding="utf-8").splitlines()
    vocab = Vocab(tokens)
    model = DualModel(replace(cfg, vocab_size=None), vocab)
    model.load_state_dict(torch.load(path / "weights.pt", weights_only=True))
    model.eval()
    return model


def extend_embedding_rows(weight: torch.Tensor, n_new: int) -> torch.Tensor:
    """Append n_new rows initialized to the mean of the existing embedding.

    This is the initialization the pretrained adapter applies to the grammar
    marker tokens when they are added to an external checkpoint's vocabulary.
    """
    if n_new <= 0:
        return weight.clone()
    mean = weight.mean(dim=0, keepdim=True)
    return torch.cat([weight, mean.repeat(n_new, 1)], dim=0)


class PretrainedAdapter:
    """Interface stub for external encoder-decoder checkpoints.

    No weights ship with this package; instantiating the adapter documents the
    contract (a shared encoder plus three decoders initialized from the same
    checkpoint, marker embeddings mean-initialized via extend_embedding_rows).
    """

    def __init__(self, checkpoint_path: "str | Path"):
        self.checkpoint_path = Path(checkpoint_path)

    def load(self) -> DualModel:
        raise ModelError(
            f"no loader is bundled for external checkpoint "
            f"{self.checkpoint_path}; supply weights and implement load() "
            f"against DualModel's parameter groups"
        )


# ---------------------------------------------------------------------------
# Training.

@dataclass
class TrainResult:
    model: DualModel
    steps: int
    stopped: str
    history: list[dict] = field(default_factory=list)
    best_dev_f1: float | None = None
    checkpoint: Path | None = None


def train(
    model: DualModel,
    instances: Sequence[ExtractionInstance],
    *,
    max_steps: int = 2000,
    prompt_element: str = "predicate",
    dev_eval: Callable[[DualModel], float] | None = None,
    eval_every: int = 200,
    patience: int = 3,
    min_delta: float = 1e-4,
    target_loss: float | None = None,
    target_dev_f1: float | None = None,
    out_dir: "str | Path | None" = None,
    log_every: int = 10,
    on_step: Callable[[dict], None] | None = None,
) -> TrainResult:
    """Joint training: every optimizer step backpropagates the combined loss
    of all three objectives computed on the same mini-batch.

    Early stopping (when dev_eval is given) triggers after `patience`
    evaluations without a dev-F1 improvement of at least min_delta; the best
    dev checkpoint is restored. target_loss / target_dev_f1 stop the run as
    soon as they are reached.
    """
    if not instances:
        raise ModelError("training corpus is empty")
    cfg = model.cfg
    rng = random.Random(cfg.seed)
    torch.manual_seed(cfg.seed)

    pair_sets = [make_training_pairs(inst, prompt_element) for inst in instances]
    optim = torch.optim.Adam(model.parameters(), lr=cfg.lr)

    out_path = Path(out_dir) if out_dir is not None else None
    log_fh = None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
        log_fh = open(out_path / "log.jsonl", "w", encoding="utf-8")

    history: list[dict] = []
    best_f1 = -1.0
    best_state = None
    bad_evals = 0
    stopped = "max_steps"
    last_good: Path | None = None
    step = 0

    def log(entry: dict) -> None:
        history.append(entry)
        if log_fh is not None:
            log_fh.write(json.dumps(entry) + "\n")
            log_fh.flush()
        if on_step is not None:
            on_step(entry)

    try:
        model.train()
        order = list(range(len(instances)))
        done = False
        while not done:
            rng.shuffle(order)
            for lo in range(0, len(order), cfg.batch_size):
                batch_pairs: list[TrainingPair] = []
                for i in order[lo: lo + cfg.batch_size]:
                    batch_pairs.extend(pair_sets[i])
                optim.zero_grad()
                losses = loss_tensors(model, batch_pairs)
                total = combine_losses(cfg, losses)
                value = float(total.detach())
                if not math.isfinite(value):
                    raise DivergenceDetected(
                        f"non-finite loss at step {step}",
                        str(last_good) if last_good else None,
                    )
                total.backward()
                if cfg.clip_norm:
                    nn.utils.clip_grad_norm_(model.parameters(), cfg.clip_norm)
                optim.step()
                step += 1

                if step % log_every == 0 or step == 1:
                    log({"step": step, "L": value,
                         "L_P": float(losses["P"].detach()),
                         "L_T": float(losses["T"].detach()),
                         "L_S": float(losses["S"].detach())})

                if target_loss is not None and value < target_loss:
                    stopped = "target_loss"
                    done = True
                    break

                if dev_eval is None and out_path is not None and step % eval_every == 0:
                    last_good = save_checkpoint(model, out_path / "checkpoint-last")

                if dev_eval is not None and step % eval_every == 0:
                    model.eval()
                    f1 = dev_eval(model)
                    model.train()
                    logger.info("step %d dev_f1 %.4f", step, f1)
                    log({"step": step, "dev_f1": f1})
                    if out_path is not None:
                        last_good = save_checkpoint(model, out_path / "checkpoint-last")
                    if f1 > best_f1 + min_delta:
                        best_f1 = f1
                        bad_evals = 0
                        best_state = copy.deepcopy(model.state_dict())
                        if out_path is not None:
                            save_checkpoint(model, out_path / "checkpoint-best")
                    else:
                        bad_evals += 1
                        if bad_evals >= patience:
                            stopped = "early_stop"
                            done = True
                            break
                    if target_dev_f1 is not None and f1 >= target_dev_f1:
                        stopped = "target_dev_f1"
                        done = True
                        break

                if step >= max_steps:
                    stopped = "max_steps"
                    done = True
                    break
    finally:
        if log_fh is not None:
            log_fh.close()

    if best_state is not None and dev_eval is not None:
        model.load_state_dict(best_state)
    model.eval()
    checkpoint = None
    if out_path is not None:
        checkpoint = save_checkpoint(model, out_path / "checkpoint-final")
    return TrainResult(model=model, steps=step, stopped=stopped, history=history,
                       best_dev_f1=best_f1 if best_f1 >= 0 else None,
                       checkpoint=checkpoint)
