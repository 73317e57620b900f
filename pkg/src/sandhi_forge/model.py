"""The double-decoder sandhi splitter and its ablations.

Architecture: character embeddings feed a stacked LSTM encoder (bidirectional
except in the RNN variant); per-position forward and backward top states are
concatenated into context vectors. A location decoder (DD-RNN only) runs for
exactly the input length over a binary alphabet and marks split positions; a
character decoder generates the constituent words joined by SEP. Both
decoders attend over the encoder states with a shared bilinear score matrix
(variants without attention skip it) and are initialized from an affine map
of the final encoder state. Attentive decoders use input feeding: the
previous step's attentional vector is concatenated to the next input, so the
query carries its own alignment history.

Variants:
  RNN      unidirectional encoder, character decoder, no attention
  B-RNN    bidirectional encoder, no attention
  B-RNN-A  bidirectional encoder with attention
  DD-RNN   B-RNN-A plus the location decoder
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import translit

VARIANTS = ("RNN", "B-RNN", "B-RNN-A", "DD-RNN")

CHECKPOINT_FORMAT_VERSION = 1

# location decoder's private alphabet: BOS then the two bit symbols
LOC_BOS, LOC_ZERO, LOC_ONE = 0, 1, 2


class EmptyInput(ValueError):
    pass


class LengthMismatch(ValueError):
    pass


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    embed_dim: int = 128
    hidden: int = 512
    layers: int = 2
    dropout_p: float = 0.3
    variant: str = "DD-RNN"
    max_decode_len: int = 64
    # +-0.1 suits full-size nets (hidden 512); small nets need a larger scale
    # or input-dependent signal stays orders below the bias path and training
    # stalls at the language-model floor
    init_scale: float = 0.1
    # extra factor on the bilinear attention map's init. Well below 1 starts
    # attention near uniform, so early decoder steps see a stable summary of
    # the whole word instead of chasing one noisy alignment per seed
    attn_scale: float = 1.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if min(self.vocab_size, self.embed_dim, self.hidden, self.layers, self.max_decode_len) <= 0:
            raise ValueError("all dimensions must be positive")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError(f"dropout_p {self.dropout_p} outside [0, 1)")
        if self.init_scale <= 0:
            raise ValueError("init_scale must be positive")
        if self.attn_scale <= 0:
            raise ValueError("attn_scale must be positive")

    @property
    def bidirectional(self) -> bool:
        return self.variant != "RNN"

    @property
    def attentive(self) -> bool:
        return self.variant in ("B-RNN-A", "DD-RNN")

    @property
    def has_location_decoder(self) -> bool:
        return self.variant == "DD-RNN"

    @property
    def enc_width(self) -> int:
        return self.hidden * (2 if self.bidirectional else 1)


@dataclass
class LstmLayerParams:
    W_x: ad.Tensor  # [4h, in]
    W_h: ad.Tensor  # [4h, h]
    b: ad.Tensor  # [4h]


def lstm_cell(x, h, c, p: LstmLayerParams, wx_t=None, wh_t=None):
    """One LSTM step. i,f,o gates are sigmoids, candidate g a tanh;
    c' = f*c + i*g, h' = o*tanh(c'). Gate packing order along 4h: i,f,g,o."""
    if wx_t is None:
        wx_t = ad.transpose(p.W_x)
    if wh_t is None:
        wh_t = ad.transpose(p.W_h)
    hdim = p.W_h.shape[1]
    gates = ad.add_bias(ad.add(ad.matmul(x, wx_t), ad.matmul(h, wh_t)), p.b)
    i = ad.sigmoid(ad.slice_axis(gates, 0, hdim, axis=1))
    f = ad.sigmoid(ad.slice_axis(gates, hdim, 2 * hdim, axis=1))
    g = ad.tanh(ad.slice_axis(gates, 2 * hdim, 3 * hdim, axis=1))
    o = ad.sigmoid(ad.slice_axis(gates, 3 * hdim, 4 * hdim, axis=1))
    c2 = ad.add(ad.mul(f, c), ad.mul(i, g))
    h2 = ad.mul(o, ad.tanh(c2))
    return h2, c2


@dataclass
class EncoderOutputs:
    states: list  # per position, [B, enc_width]
    final: ad.Tensor  # [B, enc_width]
    mask: np.ndarray  # [B, T] float, 1 where a real character sits
    lengths: np.ndarray
    bte: ad.Tensor | None = None  # [B, T, enc_width], attention value view
    bet: ad.Tensor | None = None  # [B, enc_width, T], attention key view
    attn_bias: ad.Tensor | None = None  # [B, T] constant, -1e9 at padding

    @property
    def seq_len(self) -> int:
        return len(self.states)


@dataclass
class Batch:
    """Padded batch. char_inputs feed the character decoder (BOS-led), and
    char_targets are the same sequence shifted one step left (EOS-closed)."""

    ids: np.ndarray  # [B, T] int
    lengths: np.ndarray  # [B]
    loc_targets: np.ndarray  # [B, T] {0,1}, zero at padding
    char_inputs: np.ndarray  # [B, S] int
    char_targets: np.ndarray  # [B, S] int, PAD beyond each row's end
    char_mask: np.ndarray  # [B, S] float

    @property
    def size(self) -> int:
        return self.ids.shape[0]


@dataclass
class LossResult:
    mean: ad.Tensor  # per-token mean NLL, differentiable
    total: float  # summed NLL over non-pad steps
    tokens: int


@dataclass
class DecodeResult:
    texts: list  # decoded surface strings, SEP included
    truncated: list  # per row, True when EOS never arrived within max len


class SandhiModel:
    """One trainable model instance; parameters live in a flat named dict."""

    def __init__(self, cfg: ModelConfig, vocab: translit.Vocabulary, seed: int = 0,
                 dtype=np.float32, params: dict | None = None):
        if cfg.vocab_size != vocab.size:
            raise ValueError(f"config vocab_size {cfg.vocab_size} != vocabulary size {vocab.size}")
        self.cfg = cfg
        self.vocab = vocab
        self.seed = seed
        self.dtype = np.dtype(dtype).type
        spec = param_spec(cfg)
        if params is None:
            rng = np.random.default_rng(seed)
            s = cfg.init_scale
            self.params = {
                name: ad.parameter(rng.uniform(-s, s, size=shape), dtype=self.dtype)
                for name, shape in spec
            }
            if cfg.attentive and cfg.attn_scale != 1.0:
                self.params["attn.W_a"].data *= self.dtype(cfg.attn_scale)
        else:
            self.params = {}
            for name, shape in spec:
                if name not in params:
                    raise CheckpointError(f"missing parameter {name}")
                t = params[name]
                if tuple(t.shape) != tuple(shape):
                    raise CheckpointError(f"{name}: shape {tuple(t.shape)} != expected {tuple(shape)}")
                self.params[name] = t

    # -- parameter bookkeeping ------------------------------------------------

    def param_groups(self) -> dict:
        groups = {"embeddings": ["embed.table"], "encoder": [], "attention": [],
                  "location_decoder": [], "character_decoder": []}
        for name in self.params:
            if name.startswith("enc."):
                groups["encoder"].append(name)
            elif name.startswith("attn."):
                groups["attention"].append(name)
            elif name.startswith("loc_dec."):
                groups["location_decoder"].append(name)
            elif name.startswith("char_dec."):
                groups["character_decoder"].append(name)
        return groups

    def parameters(self, groups=None) -> list:
        if groups is None:
            return list(self.params.values())
        by_group = self.param_groups()
        names = [n for g in groups for n in by_group[g]]
        return [self.params[n] for n in names]

    @property
    def num_params(self) -> int:
        return sum(int(np.prod(p.shape)) for p in self.params.values())

    # -- encoder ----------------------------------------------------------------

    def _layer_params(self, prefix: str, layer: int) -> LstmLayerParams:
        return LstmLayerParams(
            W_x=self.params[f"{prefix}.l{layer}.W_x"],
            W_h=self.params[f"{prefix}.l{layer}.W_h"],
            b=self.params[f"{prefix}.l{layer}.b"],
        )

    def _mask_tiles(self, mask: np.ndarray):
        h = self.cfg.hidden
        tiles = []
        for t in range(mask.shape[1]):
            col = mask[:, t : t + 1]
            m = np.repeat(col, h, axis=1)
            tiles.append((ad.constant(m, dtype=self.dtype), ad.constant(1.0 - m, dtype=self.dtype)))
        return tiles

    def _run_stack(self, prefix: str, xs: list, tiles, training: bool, rng):
        """Stacked masked LSTM over a step list; returns top-layer states."""
        cfg = self.cfg
        B = xs[0].shape[0]
        zeros = np.zeros((B, cfg.hidden), dtype=self.dtype)
        layer_in = xs
        for l in range(cfg.layers):
            p = self._layer_params(prefix, l)
            wx_t, wh_t = ad.transpose(p.W_x), ad.transpose(p.W_h)
            hcur = ad.constant(zeros, dtype=self.dtype)
            ccur = ad.constant(zeros, dtype=self.dtype)
            outs = []
            for t, x in enumerate(layer_in):
                hn, cn = lstm_cell(x, hcur, ccur, p, wx_t, wh_t)
                m, mc = tiles[t]
                # padded steps carry state through unchanged
                hcur = ad.add(ad.mul(hn, m), ad.mul(hcur, mc))
                ccur = ad.add(ad.mul(cn, m), ad.mul(ccur, mc))
                outs.append(hcur)
            if training and cfg.dropout_p > 0.0:
                outs = [ad.dropout(o, cfg.dropout_p, True, rng) for o in outs]
            layer_in = outs
        return layer_in

    def encode(self, ids, lengths, training: bool = False, rng=None) -> EncoderOutputs:
        cfg = self.cfg
        ids = np.asarray(ids, dtype=np.int64)
        if ids.ndim == 1:
            ids = ids[None, :]
        lengths = np.asarray(lengths, dtype=np.int64).reshape(-1)
        B, T = ids.shape
        if T == 0 or lengths.min() < 1:
            raise EmptyInput("every input needs at least one character")
        if lengths.max() > T:
            raise LengthMismatch("length exceeds padded width")
        mask = (np.arange(T)[None, :] < lengths[:, None]).astype(self.dtype)
        tiles = self._mask_tiles(mask)
        table = self.params["embed.table"]
        emb = [ad.embedding_lookup(table, ids[:, t]) for t in range(T)]
        fw = self._run_stack("enc.fw", emb, tiles, training, rng)
        if cfg.bidirectional:
            rev_emb = [ad.embedding_lookup(table, ids[:, T - 1 - t]) for t in range(T)]
            rev_tiles = [tiles[T - 1 - t] for t in range(T)]
            bw = self._run_stack("enc.bw", rev_emb, rev_tiles, training, rng)
            states = [ad.concat([fw[p], bw[T - 1 - p]], axis=1) for p in range(T)]
            final = ad.concat([fw[-1], bw[-1]], axis=1)
        else:
            states = fw
            final = fw[-1]
        enc = EncoderOutputs(states=states, final=final, mask=mask, lengths=lengths)
        if cfg.attentive:
            W = cfg.enc_width
            enc.bte = ad.concat([ad.reshape(s, (B, 1, W)) for s in states], axis=1)
            enc.bet = ad.concat([ad.reshape(s, (B, W, 1)) for s in states], axis=2)
            enc.attn_bias = ad.constant((mask - 1.0) * 1e9, dtype=self.dtype)
        return enc

    # -- attention ----------------------------------------------------------------

    def attend(self, dec_state: ad.Tensor, enc: EncoderOutputs):
        """Bilinear global attention: score = dec_state . W_a . enc_state."""
        B, T, W = enc.bte.shape
        q = ad.matmul(dec_state, self.params["attn.W_a"])  # [B, enc_width]
        scores = ad.reshape(ad.bmm(ad.reshape(q, (B, 1, W)), enc.bet), (B, T))
        alpha = ad.softmax_rows(ad.add(scores, enc.attn_bias))
        ctx = ad.reshape(ad.bmm(ad.reshape(alpha, (B, 1, T)), enc.bte), (B, W))
        return ctx, alpha

    # -- decoders -----------------------------------------------------------------

    def _dec_init(self, dec: str, enc: EncoderOutputs):
        cfg = self.cfg
        v = ad.add_bias(ad.matmul(enc.final, self.params[f"{dec}.init.W"]),
                        self.params[f"{dec}.init.b"])
        hs, cs = [], []
        for l in range(cfg.layers):
            off = 2 * l * cfg.hidden
            hs.append(ad.slice_axis(v, off, off + cfg.hidden, axis=1))
            cs.append(ad.slice_axis(v, off + cfg.hidden, off + 2 * cfg.hidden, axis=1))
        return hs, cs

    def _dec_transposed(self, dec: str):
        out = []
        for l in range(self.cfg.layers):
            p = self._layer_params(dec, l)
            out.append((p, ad.transpose(p.W_x), ad.transpose(p.W_h)))
        return out

    def _feed0(self, batch_size: int):
        """Zero attentional vector for the first input-feeding step."""
        return ad.constant(np.zeros((batch_size, self.cfg.hidden)), dtype=self.dtype)

    def _dec_step(self, dec: str, x_emb, hs, cs, enc, weights, training, rng, feed=None):
        cfg = self.cfg
        inp = ad.concat([x_emb, feed], axis=1) if cfg.attentive else x_emb
        for l, (p, wx_t, wh_t) in enumerate(weights):
            hs[l], cs[l] = lstm_cell(inp, hs[l], cs[l], p, wx_t, wh_t)
            inp = hs[l]
            if training and cfg.dropout_p > 0.0:
                inp = ad.dropout(inp, cfg.dropout_p, True, rng)
        alpha = None
        if cfg.attentive:
            ctx, alpha = self.attend(inp, enc)
            merged = ad.concat([ctx, inp], axis=1)
            inp = ad.tanh(ad.add_bias(ad.matmul(merged, self.params[f"{dec}.combine.W"]),
                                      self.params[f"{dec}.combine.b"]))
        logits = ad.add_bias(ad.matmul(inp, self.params[f"{dec}.out.W"]),
                             self.params[f"{dec}.out.b"])
        return logits, alpha, inp

    def location_logits(self, enc: EncoderOutputs, gold_bits: np.ndarray,
                        training: bool = False, rng=None):
        """Teacher-forced location decoder; one [B,2] logit row per position."""
        if not self.cfg.has_location_decoder:
            raise ValueError(f"variant {self.cfg.variant} has no location decoder")
        gold_bits = np.asarray(gold_bits, dtype=np.int64)
        B, T = gold_bits.shape
        if T != enc.seq_len:
            raise LengthMismatch("location targets must match input length")
        table = self.params["loc_dec.embed"]
        hs, cs = self._dec_init("loc_dec", enc)
        weights = self._dec_transposed("loc_dec")
        prev = np.full(B, LOC_BOS, dtype=np.int64)
        feed = self._feed0(B)
        out = []
        for t in range(T):
            logits, _, feed = self._dec_step("loc_dec", ad.embedding_lookup(table, prev),
                                             hs, cs, enc, weights, training, rng, feed)
            out.append(logits)
            prev = gold_bits[:, t] + 1  # bit b is symbol b+1
        return out

    def decode_locations(self, enc: EncoderOutputs):
        """Greedy location decoding; returns (bits [B,T], probs [B,T,2])."""
        if not self.cfg.has_location_decoder:
            raise ValueError(f"variant {self.cfg.variant} has no location decoder")
        B, T = enc.mask.shape
        table = self.params["loc_dec.embed"]
        hs, cs = self._dec_init("loc_dec", enc)
        weights = self._dec_transposed("loc_dec")
        prev = np.full(B, LOC_BOS, dtype=np.int64)
        feed = self._feed0(B)
        bits = np.zeros((B, T), dtype=np.int64)
        probs = np.zeros((B, T, 2), dtype=np.float64)
        for t in range(T):
            logits, _, feed = self._dec_step("loc_dec", ad.embedding_lookup(table, prev),
                                             hs, cs, enc, weights, False, None, feed)
            p = ad.softmax_rows(logits).data
            bits[:, t] = p.argmax(axis=1)
            probs[:, t] = p
            prev = bits[:, t] + 1
        bits *= enc.mask.astype(np.int64)
        return bits, probs

    def character_logits(self, enc: EncoderOutputs, char_inputs: np.ndarray,
                         training: bool = False, rng=None):
        """Teacher-forced character decoder over the shared embedding table."""
        char_inputs = np.asarray(char_inputs, dtype=np.int64)
        B, S = char_inputs.shape
        table = self.params["embed.table"]
        hs, cs = self._dec_init("char_dec", enc)
        weights = self._dec_transposed("char_dec")
        feed = self._feed0(B)
        out = []
        for t in range(S):
            logits, _, feed = self._dec_step("char_dec", ad.embedding_lookup(table, char_inputs[:, t]),
                                             hs, cs, enc, weights, training, rng, feed)
            out.append(logits)
        return out

    def decode_characters(self, enc: EncoderOutputs, max_len: int | None = None) -> DecodeResult:
        """Greedy generation from BOS until EOS or the length cap."""
        cfg = self.cfg
        vocab = self.vocab
        max_len = cfg.max_decode_len if max_len is None else max_len
        B = enc.mask.shape[0]
        table = self.params["embed.table"]
        hs, cs = self._dec_init("char_dec", enc)
        weights = self._dec_transposed("char_dec")
        # argmax never picks the purely structural symbols
        ban = np.zeros(vocab.size, dtype=np.float64)
        ban[[vocab.pad_id, vocab.bos_id, vocab.unk_id]] = -np.inf
        prev = np.full(B, vocab.bos_id, dtype=np.int64)
        done = np.zeros(B, dtype=bool)
        rows = [[] for _ in range(B)]
        feed = self._feed0(B)
        for _ in range(max_len):
            logits, _, feed = self._dec_step("char_dec", ad.embedding_lookup(table, prev),
                                             hs, cs, enc, weights, False, None, feed)
            nxt = (logits.data.astype(np.float64) + ban[None, :]).argmax(axis=1)
            for b in range(B):
                if done[b]:
                    continue
                if nxt[b] == vocab.eos_id:
                    done[b] = True
                else:
                    rows[b].append(int(nxt[b]))
            if done.all():
                break
            prev = np.where(done, vocab.eos_id, nxt)
        texts = [vocab.decode(r) for r in rows]
        return DecodeResult(texts=texts, truncated=list(~done))

    # -- losses -----------------------------------------------------------------

    def loss_from_logits(self, step_logits: list, targets: np.ndarray,
                         mask: np.ndarray) -> LossResult:
        """Masked NLL: -sum log P(target) over real steps, plus the per-token
        mean that training optimizes and perplexity exponentiates."""
        targets = np.asarray(targets, dtype=np.int64)
        B, S = targets.shape
        if len(step_logits) != S:
            raise LengthMismatch(f"{len(step_logits)} logit steps vs {S} target steps")
        V = step_logits[0].shape[1]
        logp = ad.log_softmax_rows(ad.concat(step_logits, axis=0))  # [S*B, V]
        pick = np.zeros((S * B, V), dtype=self.dtype)
        m = np.asarray(mask, dtype=self.dtype)
        rows = np.arange(B)
        for t in range(S):
            pick[t * B + rows, targets[:, t]] = m[:, t]
        picked = ad.sum_all(ad.mul(logp, ad.constant(pick, dtype=self.dtype)))
        tokens = int(round(float(m.sum())))
        if tokens == 0:
            raise LengthMismatch("no unmasked target steps")
        loss_sum = ad.mul(picked, -1.0)
        mean = ad.mul(loss_sum, 1.0 / tokens)
        return LossResult(mean=mean, total=loss_sum.item(), tokens=tokens)

    def location_loss(self, batch: Batch, training: bool = False, rng=None) -> LossResult:
        enc = self.encode(batch.ids, batch.lengths, training, rng)
        logits = self.location_logits(enc, batch.loc_targets, training, rng)
        return self.loss_from_logits(logits, batch.loc_targets, enc.mask)

    def character_loss(self, batch: Batch, training: bool = False, rng=None) -> LossResult:
        enc = self.encode(batch.ids, batch.lengths, training, rng)
        logits = self.character_logits(enc, batch.char_inputs, training, rng)
        return self.loss_from_logits(logits, batch.char_targets, batch.char_mask)


def param_spec(cfg: ModelConfig) -> list:
    """Ordered (name, shape) pairs; fixes checkpoint blob layout."""
    E, h, V = cfg.embed_dim, cfg.hidden, cfg.vocab_size
    spec = [("embed.table", (V, E))]
    dirs = ("fw", "bw") if cfg.bidirectional else ("fw",)
    for d in dirs:
        in_dim = E
        for l in range(cfg.layers):
            spec += [(f"enc.{d}.l{l}.W_x", (4 * h, in_dim)),
                     (f"enc.{d}.l{l}.W_h", (4 * h, h)),
                     (f"enc.{d}.l{l}.b", (4 * h,))]
            in_dim = h
    if cfg.attentive:
        spec.append(("attn.W_a", (h, cfg.enc_width)))
    decoders = (["loc_dec"] if cfg.has_location_decoder else []) + ["char_dec"]
    for dec in decoders:
        spec += [(f"{dec}.init.W", (cfg.enc_width, 2 * cfg.layers * h)),
                 (f"{dec}.init.b", (2 * cfg.layers * h,))]
        if dec == "loc_dec":
            spec.append(("loc_dec.embed", (3, E)))
        # input feeding widens the first decoder layer by the attentional vector
        in_dim = E + h if cfg.attentive else E
        for l in range(cfg.layers):
            spec += [(f"{dec}.l{l}.W_x", (4 * h, in_dim)),
                     (f"{dec}.l{l}.W_h", (4 * h, h)),
                     (f"{dec}.l{l}.b", (4 * h,))]
            in_dim = h
        if cfg.attentive:
            spec += [(f"{dec}.combine.W", (cfg.enc_width + h, h)),
                     (f"{dec}.combine.b", (h,))]
        out_n = 2 if dec == "loc_dec" else V
        spec += [(f"{dec}.out.W", (h, out_n)), (f"{dec}.out.b", (out_n,))]
    return spec


def build_variant(cfg: ModelConfig, vocab: translit.Vocabulary, seed: int = 0) -> SandhiModel:
    return SandhiModel(cfg, vocab, seed=seed)


# ---------------------------------------------------------------------------
# checkpoints: manifest.json + params.bin (little-endian f32, manifest order)


def _manifest(model: SandhiModel) -> dict:
    cfg = model.cfg
    return {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "config": {
            "vocab_size": cfg.vocab_size,
            "embed_dim": cfg.embed_dim,
            "hidden": cfg.hidden,
            "layers": cfg.layers,
            "dropout_p": cfg.dropout_p,
            "variant": cfg.variant,
            "max_decode_len": cfg.max_decode_len,
            "init_scale": cfg.init_scale,
            "attn_scale": cfg.attn_scale,
        },
        "vocab": model.vocab.chars(),
        "seed": model.seed,
        "params": [[name, list(shape)] for name, shape in param_spec(cfg)],
    }


def save_checkpoint(model: SandhiModel, path) -> None:
    os.makedirs(path, exist_ok=True)
    manifest = _manifest(model)
    blob = b"".join(model.params[name].data.astype("<f4").tobytes()
                    for name, _ in param_spec(model.cfg))
    with open(os.path.join(path, "manifest.json"), "w", encoding="utf-8") as fh:
        fh.write(json.dumps(manifest, sort_keys=True, separators=(",", ":")))
    with open(os.path.join(path, "params.bin"), "wb") as fh:
        fh.write(blob)


def load_checkpoint(path) -> SandhiModel:
    try:
        with open(os.path.join(path, "manifest.json"), encoding="utf-8") as fh:
            manifest = json.load(fh)
        with open(os.path.join(path, "params.bin"), "rb") as fh:
            blob = fh.read()
    except OSError as e:
        raise CheckpointError(f"unreadable checkpoint at {path}: {e}") from e
    if manifest.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(f"unsupported format version {manifest.get('format_version')!r}")
    cfg = ModelConfig(**manifest["config"])
    expected = [[name, list(shape)] for name, shape in param_spec(cfg)]
    if manifest["params"] != expected:
        raise CheckpointError("manifest parameter list does not match the config")
    vocab = translit.Vocabulary.from_chars(manifest["vocab"])
    params = {}
    offset = 0
    for name, shape in param_spec(cfg):
        n = int(np.prod(shape))
        chunk = blob[offset * 4 : (offset + n) * 4]
        if len(chunk) != n * 4:
            raise CheckpointError(f"blob too short at {name}")
        arr = np.frombuffer(chunk, dtype="<f4").reshape(shape)
        params[name] = ad.parameter(arr.copy(), dtype=np.float32)
        offset += n
    if offset * 4 != len(blob):
        raise CheckpointError("blob length does not match manifest shapes")
    return SandhiModel(cfg, vocab, seed=manifest["seed"], params=params)
