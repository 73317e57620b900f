import numpy as np
import pytest

from sandhi_forge import autodiff as ad
from sandhi_forge import model as md
from sandhi_forge import translit
from fdcheck import assert_grads_match, projected_sum


def tiny_cfg(variant="DD-RNN", **kw):
    args = dict(vocab_size=8, embed_dim=4, hidden=6, layers=2, dropout_p=0.0,
                variant=variant, max_decode_len=12)
    args.update(kw)
    return md.ModelConfig(**args)


def tiny_vocab():
    return translit.build_vocab(["abc"])  # 3 chars + 5 specials = 8


def pad_batch(vocab, words, locs, splits):
    """Hand batch assembly for model-level tests."""
    B = len(words)
    T = max(len(w) for w in words)
    ids = np.full((B, T), vocab.pad_id, dtype=np.int64)
    lengths = np.zeros(B, dtype=np.int64)
    loc_t = np.zeros((B, T), dtype=np.int64)
    for i, w in enumerate(words):
        ids[i, : len(w)] = vocab.encode(w)
        lengths[i] = len(w)
        loc_t[i, : len(w)] = locs[i]
    seqs = [[vocab.bos_id] + vocab.encode(s) + [vocab.eos_id] for s in splits]
    S = max(len(s) for s in seqs) - 1
    ci = np.full((B, S), vocab.pad_id, dtype=np.int64)
    ct = np.full((B, S), vocab.pad_id, dtype=np.int64)
    cm = np.zeros((B, S), dtype=np.float32)
    for i, s in enumerate(seqs):
        n = len(s) - 1
        ci[i, :n] = s[:-1]
        ct[i, :n] = s[1:]
        cm[i, :n] = 1.0
    return md.Batch(ids=ids, lengths=lengths, loc_targets=loc_t,
                    char_inputs=ci, char_targets=ct, char_mask=cm)


def demo_batch(vocab):
    return pad_batch(vocab,
                     words=["abcab", "cba"],
                     locs=[[0, 0, 1, 0, 0], [0, 1, 0]],
                     splits=["abc+ab", "cb+a"])


# ---------------------------------------------------------------------------
# lstm cell


def test_lstm_cell_all_zero():
    h = 3
    p = md.LstmLayerParams(
        W_x=ad.constant(np.zeros((4 * h, 2))),
        W_h=ad.constant(np.zeros((4 * h, h))),
        b=ad.constant(np.zeros(4 * h)),
    )
    h2, c2 = md.lstm_cell(ad.constant(np.zeros((1, 2))), ad.constant(np.zeros((1, h))),
                          ad.constant(np.zeros((1, h))), p)
    np.testing.assert_array_equal(h2.data, np.zeros((1, h), np.float32))
    np.testing.assert_array_equal(c2.data, np.zeros((1, h), np.float32))


def test_lstm_cell_forget_gate_saturation():
    rng = np.random.default_rng(0)
    h, din = 3, 2
    b = np.zeros(4 * h, np.float32)
    b[h : 2 * h] = 50.0  # forget gate pinned open
    W_x = rng.standard_normal((4 * h, din)).astype(np.float32) * 0.5
    W_h = rng.standard_normal((4 * h, h)).astype(np.float32) * 0.5
    p = md.LstmLayerParams(ad.constant(W_x), ad.constant(W_h), ad.constant(b))
    x = rng.standard_normal((2, din)).astype(np.float32)
    hp = rng.standard_normal((2, h)).astype(np.float32)
    c = rng.standard_normal((2, h)).astype(np.float32)
    _, c2 = md.lstm_cell(ad.constant(x), ad.constant(hp), ad.constant(c), p)
    gates = x @ W_x.T + hp @ W_h.T + b
    i = 1.0 / (1.0 + np.exp(-gates[:, :h]))
    g = np.tanh(gates[:, 2 * h : 3 * h])
    np.testing.assert_allclose(c2.data, c + i * g, rtol=1e-5, atol=1e-6)


def test_lstm_cell_grads_match_fd():
    rng = np.random.default_rng(1)
    for _ in range(20):
        B, din, h = (int(v) for v in rng.integers(1, 4, size=3))
        x = rng.standard_normal((B, din)).astype(np.float32)
        hp = rng.standard_normal((B, h)).astype(np.float32)
        c = rng.standard_normal((B, h)).astype(np.float32)
        W_x = rng.standard_normal((4 * h, din)).astype(np.float32)
        W_h = rng.standard_normal((4 * h, h)).astype(np.float32)
        b = rng.standard_normal(4 * h).astype(np.float32)
        proj = rng.standard_normal((B, 2 * h)).astype(np.float32)

        def build(ts, dt):
            p = md.LstmLayerParams(ts[3], ts[4], ts[5])
            h2, c2 = md.lstm_cell(ts[0], ts[1], ts[2], p)
            return projected_sum(ad.concat([h2, c2], axis=1), proj, dt)

        assert_grads_match(build, [x, hp, c, W_x, W_h, b])


# ---------------------------------------------------------------------------
# encoder


def test_encode_shapes():
    vocab = tiny_vocab()
    m = md.SandhiModel(tiny_cfg(), vocab, seed=0)
    enc = m.encode([vocab.encode("a")], [1])
    assert enc.seq_len == 1 and enc.states[0].shape == (1, 12)
    word_vocab = translit.build_vocab(["protsAhaH"])
    cfg = tiny_cfg(vocab_size=word_vocab.size)
    m2 = md.SandhiModel(cfg, word_vocab, seed=0)
    enc2 = m2.encode([word_vocab.encode("protsAhaH")], [9])
    assert enc2.seq_len == 9
    assert all(s.shape == (1, 2 * cfg.hidden) for s in enc2.states)
    assert enc2.final.shape == (1, 2 * cfg.hidden)


def test_encode_rejects_empty():
    vocab = tiny_vocab()
    m = md.SandhiModel(tiny_cfg(), vocab, seed=0)
    with pytest.raises(md.EmptyInput):
        m.encode(np.zeros((1, 0), np.int64), [0])
    with pytest.raises(md.EmptyInput):
        m.encode([[vocab.pad_id]], [0])


def test_encode_palindrome_symmetry_with_tied_directions():
    vocab = tiny_vocab()
    m = md.SandhiModel(tiny_cfg(), vocab, seed=3)
    for l in range(m.cfg.layers):
        for part in ("W_x", "W_h", "b"):
            m.params[f"enc.bw.l{l}.{part}"].data = m.params[f"enc.fw.l{l}.{part}"].data.copy()
    word = "abcba"
    enc = m.encode([vocab.encode(word)], [len(word)])
    h = m.cfg.hidden
    T = len(word)
    for p in range(T):
        fw_here = enc.states[p].data[:, :h]
        bw_mirror = enc.states[T - 1 - p].data[:, h:]
        np.testing.assert_allclose(fw_here, bw_mirror, rtol=1e-6, atol=1e-7)


def test_encode_padding_indifference():
    # a padded batch must produce the same states, losses, and decodes as the
    # same rows unpadded; this is the masking contract
    vocab = tiny_vocab()
    m = md.SandhiModel(tiny_cfg(), vocab, seed=5)
    word = "cab"
    ids = vocab.encode(word)
    enc_tight = m.encode([ids], [3])
    enc_wide = m.encode([ids + [vocab.pad_id] * 3], [3])
    np.testing.assert_allclose(enc_tight.final.data, enc_wide.final.data, rtol=1e-6, atol=1e-7)
    for p in range(3):
        np.testing.assert_allclose(enc_tight.states[p].data, enc_wide.states[p].data,
                                   rtol=1e-6, atol=1e-7)
    bits_t, _ = m.decode_locations(enc_tight)
    bits_w, _ = m.decode_locations(enc_wide)
    np.testing.assert_array_equal(bits_t[0], bits_w[0, :3])
    assert bits_w[0, 3:].sum() == 0
    out_t = m.decode_characters(enc_tight)
    out_w = m.decode_characters(enc_wide)
    assert out_t.texts == out_w.texts


def test_padded_batch_losses_match_singletons():
    vocab = tiny_vocab()
    m = md.SandhiModel(tiny_cfg(), vocab, seed=7)
    batch = demo_batch(vocab)
    joint_loc = m.location_loss(batch)
    joint_char = m.character_loss(batch)
    tot_loc = tot_char = 0.0
    n_loc = n_char = 0
    for i, (w, l, s) in enumerate([("abcab", [0, 0, 1, 0, 0], "abc+ab"), ("cba", [0, 1, 0], "cb+a")]):
        single = pad_batch(vocab, [w], [l], [s])
        r1 = m.location_loss(single)
        r2 = m.character_loss(single)
        tot_loc += r1.total
        tot_char += r2.total
        n_loc += r1.tokens
        n_char += r2.tokens
    assert joint_loc.tokens == n_loc and joint_char.tokens == n_char
    assert joint_loc.total == pytest.approx(tot_loc, rel=1e-5)
    assert joint_char.total == pytest.approx(tot_char, rel=1e-5)


# ---------------------------------------------------------------------------
# attention


def uniform_enc(m, B, T, value_rows=None):
    W = m.cfg.enc_width
    rng = np.random.default_rng(9)
    if value_rows is None:
        row = rng.standard_normal((B, 1, W)).astype(np.float32)
        data = np.repeat(row, T, axis=1)
    else:
        data = value_rows
    states = [ad.constant(data[:, t]) for t in range(T)]
    enc = md.EncoderOutputs(states=states, final=ad.constant(data[:, -1]),
                            mask=np.ones((B, T), np.float32),
                            lengths=np.full(B, T))
    enc.bte = ad.constant(data)
    enc.bet = ad.constant(data.transpose(0, 2, 1).copy())
    enc.attn_bias = ad.constant(np.zeros((B, T), np.float32))
    return enc


def test_attend_uniform_over_identical_states():
    vocab = tiny_vocab()
    m = md.SandhiModel(tiny_cfg(), vocab, seed=11)
    B, T = 2, 5
    enc = uniform_enc(m, B, T)
    dec = ad.constant(np.random.default_rng(1).standard_normal((B, m.cfg.hidden)).astype(np.float32))
    _, alpha = m.attend(dec, enc)
    np.testing.assert_allclose(alpha.data, np.full((B, T), 1.0 / T), atol=1e-6)


def test_attend_single_position():
    vocab = tiny_vocab()
    m = md.SandhiModel(tiny_cfg(), vocab, seed=11)
    enc = uniform_enc(m, 3, 1)
    dec = ad.constant(np.ones((3, m.cfg.hidden), np.float32))
    _, alpha = m.attend(dec, enc)
    np.testing.assert_allclose(alpha.data, np.ones((3, 1)), atol=1e-7)


def test_attend_rows_are_distributions():
    vocab = tiny_vocab()
    m = md.SandhiModel(tiny_cfg(), vocab, seed=13)
    rng = np.random.default_rng(2)
    B, T = 4, 7
    data = rng.standard_normal((B, T, m.cfg.enc_width)).astype(np.float32)
    enc = uniform_enc(m, B, T, value_rows=data)
    dec = ad.constant(rng.standard_normal((B, m.cfg.hidden)).astype(np.float32))
    _, alpha = m.attend(dec, enc)
    assert np.all(alpha.data >= 0)
    np.testing.assert_allclose(alpha.data.sum(axis=1), np.ones(B), atol=1e-5)


# ---------------------------------------------------------------------------
# decoders


def test_location_decode_length_law_exhaustive():
    vocab = tiny_vocab()
    m = md.SandhiModel(tiny_cfg(), vocab, seed=17)
    rng = np.random.default_rng(3)
    for L in range(1, 32):
        ids = rng.integers(5, 8, size=(1, L))
        enc = m.encode(ids, [L])
        bits, probs = m.decode_locations(enc)
        assert bits.shape == (1, L)
        assert set(np.unique(bits)) <= {0, 1}
        np.testing.assert_allclose(probs.sum(axis=2), np.ones((1, L)), atol=1e-5)
        assert np.all(probs >= 0)


def test_location_decoder_only_on_ddrnn():
    vocab = tiny_vocab()
    m = md.SandhiModel(tiny_cfg(variant="B-RNN-A"), vocab, seed=0)
    enc = m.encode([vocab.encode("ab")], [2])
    with pytest.raises(ValueError):
        m.decode_locations(enc)


def test_decode_characters_eos_first():
    vocab = tiny_vocab()
    m = md.SandhiModel(tiny_cfg(), vocab, seed=19)
    m.params["char_dec.out.b"].data[vocab.eos_id] = 100.0
    enc = m.encode([vocab.encode("abc")], [3])
    out = m.decode_characters(enc)
    assert out.texts == [""] and out.truncated == [False]


def test_decode_characters_truncation_flagged():
    vocab = tiny_vocab()
    m = md.SandhiModel(tiny_cfg(), vocab, seed=19)
    m.params["char_dec.out.b"].data[vocab.id_of["a"]] = 100.0
    enc = m.encode([vocab.encode("abc")], [3])
    out = m.decode_characters(enc)
    assert out.truncated == [True]
    assert out.texts == ["a" * m.cfg.max_decode_len]


def test_decode_characters_emits_only_surface_symbols():
    vocab = tiny_vocab()
    allowed = set("abc") | {translit.SEP}
    for seed in range(6):
        m = md.SandhiModel(tiny_cfg(), vocab, seed=seed)
        enc = m.encode([vocab.encode("cab")], [3])
        out = m.decode_characters(enc)
        assert set(out.texts[0]) <= allowed


# ---------------------------------------------------------------------------
# loss


def test_loss_one_hot_correct_is_zero():
    vocab = tiny_vocab()
    m = md.SandhiModel(tiny_cfg(), vocab, seed=0)
    targets = np.array([[1, 3], [2, 0]])
    mask = np.ones((2, 2), np.float32)
    steps = []
    for t in range(2):
        logits = np.zeros((2, 8), np.float32)
        logits[np.arange(2), targets[:, t]] = 1000.0
        steps.append(ad.constant(logits))
    res = m.loss_from_logits(steps, targets, mask)
    assert res.mean.item() == pytest.approx(0.0, abs=1e-6)
    assert res.tokens == 4


def test_loss_uniform_is_log_v():
    vocab = tiny_vocab()
    m = md.SandhiModel(tiny_cfg(), vocab, seed=0)
    n_steps = 3
    steps = [ad.constant(np.zeros((2, 8), np.float32)) for _ in range(n_steps)]
    targets = np.zeros((2, n_steps), np.int64)
    res = m.loss_from_logits(steps, targets, np.ones((2, n_steps), np.float32))
    assert res.mean.item() == pytest.approx(np.log(8.0), rel=1e-6)
    assert res.total == pytest.approx(6 * np.log(8.0), rel=1e-6)


def test_loss_matches_hand_oracle():
    vocab = tiny_vocab()
    m = md.SandhiModel(tiny_cfg(), vocab, seed=0)
    rng = np.random.default_rng(4)
    B, S, V = 3, 5, 8
    raw = rng.standard_normal((S, B, V)).astype(np.float32)
    targets = rng.integers(0, V, size=(B, S))
    mask = (rng.random((B, S)) < 0.7).astype(np.float32)
    mask[:, 0] = 1.0
    res = m.loss_from_logits([ad.constant(raw[t]) for t in range(S)], targets, mask)
    expected = 0.0
    for t in range(S):
        x = raw[t].astype(np.float64)
        logp = x - np.log(np.exp(x - x.max(1, keepdims=True)).sum(1, keepdims=True)) - x.max(1, keepdims=True)
        for b in range(B):
            expected -= mask[b, t] * logp[b, targets[b, t]]
    assert res.total == pytest.approx(expected, rel=1e-6)
    assert res.mean.item() == pytest.approx(expected / mask.sum(), rel=1e-6)


def test_loss_length_mismatch():
    vocab = tiny_vocab()
    m = md.SandhiModel(tiny_cfg(), vocab, seed=0)
    steps = [ad.constant(np.zeros((1, 8), np.float32))]
    with pytest.raises(md.LengthMismatch):
        m.loss_from_logits(steps, np.zeros((1, 2), np.int64), np.ones((1, 2), np.float32))


# ---------------------------------------------------------------------------
# variants


def test_variant_construction_laws():
    vocab = tiny_vocab()
    dd = md.build_variant(tiny_cfg("DD-RNN"), vocab)
    brnna = md.build_variant(tiny_cfg("B-RNN-A"), vocab)
    brnn = md.build_variant(tiny_cfg("B-RNN"), vocab)
    rnn = md.build_variant(tiny_cfg("RNN"), vocab)
    assert dd.num_params > brnna.num_params
    assert rnn.encode([vocab.encode("ab")], [2]).states[0].shape == (1, 6)
    assert brnn.encode([vocab.encode("ab")], [2]).states[0].shape == (1, 12)
    assert "attn.W_a" not in brnn.params and "attn.W_a" in brnna.params
    assert not any(n.startswith("loc_dec.") for n in brnna.params)


def test_param_groups_partition():
    vocab = tiny_vocab()
    m = md.build_variant(tiny_cfg("DD-RNN"), vocab)
    groups = m.param_groups()
    names = [n for g in groups.values() for n in g]
    assert sorted(names) == sorted(m.params)
    assert groups["embeddings"] == ["embed.table"]
    assert "loc_dec.embed" in groups["location_decoder"]
    assert "attn.W_a" in groups["attention"]
    frozen_names = set(groups["character_decoder"])
    trainable = m.parameters(groups=["embeddings", "encoder", "attention", "location_decoder"])
    assert all(m.params[n] not in trainable for n in frozen_names)


def test_all_variants_smoke_train():
    # every variant must cut its character loss below half the starting value
    # within 10 epochs on a small set of compounds built from a closed lexicon
    rng = np.random.default_rng(21)
    vocab = tiny_vocab()
    lex = sorted({"".join(rng.choice(list("abc")) for _ in range(rng.integers(2, 5)))
                  for _ in range(15)})
    words, locs, splits = [], [], []
    for _ in range(200):
        a, b = rng.choice(lex), rng.choice(lex)
        words.append(a + b)
        locs.append([0] * (len(a) - 1) + [1] + [0] * len(b))
        splits.append(a + translit.SEP + b)
    order = np.arange(200)
    for variant in md.VARIANTS:
        cfg = md.ModelConfig(vocab_size=8, embed_dim=16, hidden=32, layers=2,
                             dropout_p=0.0, variant=variant, max_decode_len=12,
                             init_scale=0.5)
        m = md.SandhiModel(cfg, vocab, seed=1)
        params = m.parameters()
        shuffle_rng = np.random.default_rng(2)
        initial = None
        for epoch in range(10):
            shuffle_rng.shuffle(order)
            for start in range(0, 200, 10):
                sel = order[start : start + 10]
                batch = pad_batch(vocab, [words[i] for i in sel],
                                  [locs[i] for i in sel], [splits[i] for i in sel])
                with ad.Tape():
                    loss = m.character_loss(batch, training=False)
                    if cfg.has_location_decoder:
                        loc = m.location_loss(batch, training=False)
                        total = ad.add(loss.mean, loc.mean)
                    else:
                        total = loss.mean
                    if initial is None:
                        initial = total.item()
                    final = total.item()
                    ad.backward(total)
                ad.sgd_step(params, lr=1.0)
        assert final < 0.5 * initial, f"{variant}: {final:.3f} vs initial {initial:.3f}"


# ---------------------------------------------------------------------------
# determinism


def test_forward_bit_identical_across_runs():
    vocab = tiny_vocab()
    batch = demo_batch(vocab)
    outs = []
    for _ in range(2):
        m = md.SandhiModel(tiny_cfg(), vocab, seed=42)
        enc = m.encode(batch.ids, batch.lengths)
        bits, probs = m.decode_locations(enc)
        loss = m.character_loss(batch)
        outs.append((bits.copy(), probs.copy(), loss.total))
    np.testing.assert_array_equal(outs[0][0], outs[1][0])
    np.testing.assert_array_equal(outs[0][1], outs[1][1])
    assert outs[0][2] == outs[1][2]


# ---------------------------------------------------------------------------
# end-to-end gradients


def test_end_to_end_gradients_match_fd():
    vocab = tiny_vocab()
    cfg = tiny_cfg()  # embed 4, hidden 6, vocab 8
    base = md.SandhiModel(cfg, vocab, seed=23)
    names = [name for name, _ in md.param_spec(cfg)]
    arrays = [base.params[n].data.copy() for n in names]
    batch = demo_batch(vocab)  # word length 5 plus a shorter masked row

    def build(ts, dt):
        m = md.SandhiModel(cfg, vocab, seed=0, dtype=dt, params=dict(zip(names, ts)))
        loc = m.location_loss(batch, training=False)
        char = m.character_loss(batch, training=False)
        return ad.add(loc.mean, char.mean)

    assert_grads_match(build, arrays)


# ---------------------------------------------------------------------------
# checkpoints


def test_checkpoint_round_trip(tmp_path):
    vocab = tiny_vocab()
    m = md.SandhiModel(tiny_cfg(), vocab, seed=31)
    path = tmp_path / "ckpt"
    md.save_checkpoint(m, path)
    loaded = md.load_checkpoint(path)
    assert loaded.cfg == m.cfg and loaded.seed == m.seed
    assert loaded.vocab.chars() == vocab.chars()
    for name in m.params:
        np.testing.assert_array_equal(loaded.params[name].data, m.params[name].data)
    batch = demo_batch(vocab)
    assert loaded.character_loss(batch).total == m.character_loss(batch).total


def test_checkpoint_bytes_stable(tmp_path):
    vocab = tiny_vocab()
    m = md.SandhiModel(tiny_cfg(), vocab, seed=31)
    a, b = tmp_path / "a", tmp_path / "b"
    md.save_checkpoint(m, a)
    md.save_checkpoint(m, b)
    assert (a / "manifest.json").read_bytes() == (b / "manifest.json").read_bytes()
    assert (a / "params.bin").read_bytes() == (b / "params.bin").read_bytes()


def test_checkpoint_rejects_corruption(tmp_path):
    import json

    vocab = tiny_vocab()
    m = md.SandhiModel(tiny_cfg(), vocab, seed=31)
    path = tmp_path / "ckpt"
    md.save_checkpoint(m, path)

    blob = (path / "params.bin").read_bytes()
    (path / "params.bin").write_bytes(blob[:-8])
    with pytest.raises(md.CheckpointError):
        md.load_checkpoint(path)
    (path / "params.bin").write_bytes(blob)

    manifest = json.loads((path / "manifest.json").read_text())
    manifest["format_version"] = 99
    (path / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(md.CheckpointError):
        md.load_checkpoint(path)

    manifest["format_version"] = md.CHECKPOINT_FORMAT_VERSION
    manifest["params"][0][1] = [7, 7]
    (path / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(md.CheckpointError):
        md.load_checkpoint(path)
