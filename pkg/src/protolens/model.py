"""Character-level multi-source encoder-decoder with dot-product attention.

The encoder is a unidirectional GRU over the concatenated daughter
words; every input position is represented as E[c] @ W + E[lang] @ U
with a single symbol-embedding table shared across all languages, Latin
included. The decoder GRU starts from the final encoder state, consumes
the previous output symbol (embedded with the Latin language id),
attends to the encoder states with parameter-free dot-product attention,
and feeds the concatenated context and state through a tanh MLP to
produce symbol logits.

All math is expressed through the autodiff ops, so the exact same code
path serves training (inside a Tape) and inference (outside one).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .corpus import (
    EncodedExample,
    Language,
    Vocabulary,
    Word,
)

CHECKPOINT_FORMAT = "protolens-checkpoint-v1"
ATTENTION_MASK_BIAS = -1e9


@dataclass(frozen=True)
class ModelConfig:
    embed_dim: int = 100
    hidden_dim: int = 150
    mlp_hidden: int = 200
    lang_embed_dim: int = 100
    max_decode_len: int = 30
    seed: int = 0

    def __post_init__(self):
        for name in ("embed_dim", "hidden_dim", "mlp_hidden", "lang_embed_dim", "max_decode_len"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def to_dict(self) -> dict:
        return {
            "embed_dim": self.embed_dim,
            "hidden_dim": self.hidden_dim,
            "mlp_hidden": self.mlp_hidden,
            "lang_embed_dim": self.lang_embed_dim,
            "max_decode_len": self.max_decode_len,
            "seed": self.seed,
        }


@dataclass
class GRUParams:
    """One GRU's gate matrices and biases, stored (input, output)-major."""

    reset_in: Tensor
    reset_rec: Tensor
    reset_bias: Tensor
    update_in: Tensor
    update_rec: Tensor
    update_bias: Tensor
    candidate_in: Tensor
    candidate_rec: Tensor
    candidate_bias: Tensor

    def named(self, prefix: str) -> list[tuple[str, Tensor]]:
        return [
            (f"{prefix}.{name}", getattr(self, name))
            for name in (
                "reset_in",
                "reset_rec",
                "reset_bias",
                "update_in",
                "update_rec",
                "update_bias",
                "candidate_in",
                "candidate_rec",
                "candidate_bias",
            )
        ]


@dataclass
class ModelParams:
    """All trainable tensors, in fixed declaration (and checkpoint) order."""

    symbol_embeddings: Tensor  # vocab x embed_dim
    language_embeddings: Tensor  # 6 x lang_embed_dim
    symbol_projection: Tensor  # embed_dim x embed_dim
    language_projection: Tensor  # lang_embed_dim x embed_dim
    encoder: GRUParams
    decoder: GRUParams
    mlp_hidden_weight: Tensor  # 2*hidden x mlp_hidden
    mlp_hidden_bias: Tensor
    mlp_out_weight: Tensor  # mlp_hidden x vocab
    mlp_out_bias: Tensor

    def named(self) -> list[tuple[str, Tensor]]:
        items = [
            ("symbol_embeddings", self.symbol_embeddings),
            ("language_embeddings", self.language_embeddings),
            ("symbol_projection", self.symbol_projection),
            ("language_projection", self.language_projection),
        ]
        items += self.encoder.named("encoder")
        items += self.decoder.named("decoder")
        items += [
            ("mlp_hidden_weight", self.mlp_hidden_weight),
            ("mlp_hidden_bias", self.mlp_hidden_bias),
            ("mlp_out_weight", self.mlp_out_weight),
            ("mlp_out_bias", self.mlp_out_bias),
        ]
        return items

    def all(self) -> list[Tensor]:
        return [t for _, t in self.named()]

    def parameter_count(self) -> int:
        return sum(t.data.size for t in self.all())


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int, dtype) -> Tensor:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-limit, limit, size=(fan_in, fan_out)), dtype=dtype)


def _embedding(rng: np.random.Generator, rows: int, dim: int, dtype) -> Tensor:
    return Tensor(rng.uniform(-0.1, 0.1, size=(rows, dim)), dtype=dtype)


def _gru(rng: np.random.Generator, in_dim: int, hidden: int, dtype) -> GRUParams:
    def zeros():
        return Tensor(np.zeros(hidden), dtype=dtype)

    return GRUParams(
        reset_in=_glorot(rng, in_dim, hidden, dtype),
        reset_rec=_glorot(rng, hidden, hidden, dtype),
        reset_bias=zeros(),
        update_in=_glorot(rng, in_dim, hidden, dtype),
        update_rec=_glorot(rng, hidden, hidden, dtype),
        update_bias=zeros(),
        candidate_in=_glorot(rng, in_dim, hidden, dtype),
        candidate_rec=_glorot(rng, hidden, hidden, dtype),
        candidate_bias=zeros(),
    )


def init_params(config: ModelConfig, vocab_size: int, dtype=np.float32) -> ModelParams:
    """Seeded parameter initialization; draw order is the declaration order."""
    rng = np.random.default_rng(config.seed)
    e, h, m = config.embed_dim, config.hidden_dim, config.mlp_hidden
    return ModelParams(
        symbol_embeddings=_embedding(rng, vocab_size, e, dtype),
        language_embeddings=_embedding(rng, len(Language), config.lang_embed_dim, dtype),
        symbol_projection=_glorot(rng, e, e, dtype),
        language_projection=_glorot(rng, config.lang_embed_dim, e, dtype),
        encoder=_gru(rng, e, h, dtype),
        decoder=_gru(rng, e, h, dtype),
        mlp_hidden_weight=_glorot(rng, 2 * h, m, dtype),
        mlp_hidden_bias=Tensor(np.zeros(m), dtype=dtype),
        mlp_out_weight=_glorot(rng, m, vocab_size, dtype),
        mlp_out_bias=Tensor(np.zeros(vocab_size), dtype=dtype),
    )


# ---------------------------------------------------------------------------
# graph building blocks (Tensor in, Tensor out; batch-first)


def projected_tables(params: ModelParams) -> tuple[Tensor, Tensor]:
    """Pre-project both embedding tables so per-position lookup is a gather."""
    return (
        ad.matmul(params.symbol_embeddings, params.symbol_projection),
        ad.matmul(params.language_embeddings, params.language_projection),
    )


def embed_positions(tables: tuple[Tensor, Tensor], symbol_ids, lang_ids) -> Tensor:
    sym_table, lang_table = tables
    return ad.add(ad.embedding_gather(sym_table, symbol_ids), ad.embedding_gather(lang_table, lang_ids))


def gru_step(gates: GRUParams, x: Tensor, h: Tensor) -> Tensor:
    """h' = (1 - z) * candidate + z * h, computed as candidate + z*(h - candidate)."""
    r = ad.sigmoid(
        ad.add(ad.add(ad.matmul(x, gates.reset_in), ad.matmul(h, gates.reset_rec)), gates.reset_bias)
    )
    z = ad.sigmoid(
        ad.add(ad.add(ad.matmul(x, gates.update_in), ad.matmul(h, gates.update_rec)), gates.update_bias)
    )
    candidate = ad.tanh(
        ad.add(
            ad.add(ad.matmul(x, gates.candidate_in), ad.mul(r, ad.matmul(h, gates.candidate_rec))),
            gates.candidate_bias,
        )
    )
    return ad.add(candidate, ad.mul(z, ad.add(h, ad.scale(candidate, -1.0))))


def encode_batch(
    params: ModelParams,
    input_ids: np.ndarray,
    input_langs: np.ndarray,
    input_mask: np.ndarray | None = None,
) -> tuple[Tensor, Tensor]:
    """Run the encoder GRU left to right over a (B, T) id batch.

    Returns the stacked per-position states (B, T, H) and the final state
    (B, H). With a 0/1 mask, padded steps leave the state untouched, so
    the final state is each row's state at its true last position.
    """
    batch, length = input_ids.shape
    dtype = params.symbol_embeddings.data.dtype
    tables = projected_tables(params)
    h = Tensor(np.zeros((batch, params.encoder.reset_rec.data.shape[0])), dtype=dtype)
    states = []
    for t in range(length):
        x = embed_positions(tables, input_ids[:, t], input_langs[:, t])
        h_next = gru_step(params.encoder, x, h)
        if input_mask is not None:
            keep = Tensor(
                np.repeat(input_mask[:, t : t + 1], h_next.data.shape[1], axis=1), dtype=dtype
            )
            h_next = ad.add(h, ad.mul(keep, ad.add(h_next, ad.scale(h, -1.0))))
        states.append(h_next)
        h = h_next
    return ad.stack(states, axis=1), h


def attend_batch(
    decoder_state: Tensor, encoder_states: Tensor, attention_bias: np.ndarray | None = None
) -> tuple[Tensor, Tensor]:
    """Dot-product attention; returns (context (B,H), weights (B,T))."""
    batch, length, hidden = encoder_states.data.shape
    query = ad.reshape(decoder_state, (batch, hidden, 1))
    scores = ad.reshape(ad.bmm(encoder_states, query), (batch, length))
    if attention_bias is not None:
        scores = ad.add(scores, Tensor(attention_bias, dtype=scores.data.dtype))
    weights = ad.softmax(scores, axis=-1)
    context = ad.reshape(ad.bmm(ad.reshape(weights, (batch, 1, length)), encoder_states), (batch, hidden))
    return context, weights


def decode_step_batch(
    params: ModelParams,
    prev_ids: np.ndarray,
    decoder_state: Tensor,
    encoder_states: Tensor,
    attention_bias: np.ndarray | None = None,
) -> tuple[Tensor, Tensor, Tensor]:
    """One decoder step: GRU update, attention, MLP to vocabulary logits."""
    tables = projected_tables(params)
    latin = np.full(prev_ids.shape, int(Language.LATIN), dtype=np.int64)
    x = embed_positions(tables, prev_ids, latin)
    new_state = gru_step(params.decoder, x, decoder_state)
    context, weights = attend_batch(new_state, encoder_states, attention_bias)
    hidden = ad.tanh(
        ad.add(ad.matmul(ad.concat([context, new_state], axis=1), params.mlp_hidden_weight), params.mlp_hidden_bias)
    )
    logits = ad.add(ad.matmul(hidden, params.mlp_out_weight), params.mlp_out_bias)
    return logits, new_state, weights


# ---------------------------------------------------------------------------
# batching


@dataclass(frozen=True)
class PackedBatch:
    """Padded id matrices plus masks for one training batch."""

    input_ids: np.ndarray  # (B, T) int64, PAD-padded
    input_langs: np.ndarray  # (B, T) int64
    input_mask: np.ndarray  # (B, T) 1.0 real / 0.0 pad
    attention_bias: np.ndarray  # (B, T) 0.0 real / -1e9 pad
    decoder_inputs: np.ndarray  # (B, S) int64, BOS-led gold prefix
    targets: np.ndarray  # (B, S) int64
    target_mask: np.ndarray  # (B, S)
    n_symbols: int


def pack_batch(examples: Sequence[EncodedExample], vocab: Vocabulary, dtype=np.float32) -> PackedBatch:
    if not examples:
        raise ValueError("cannot pack an empty batch")
    batch = len(examples)
    t_max = max(len(e.input_ids) for e in examples)
    s_max = max(len(e.target_ids) for e in examples)
    input_ids = np.full((batch, t_max), vocab.pad_id, dtype=np.int64)
    input_langs = np.zeros((batch, t_max), dtype=np.int64)
    input_mask = np.zeros((batch, t_max), dtype=dtype)
    decoder_inputs = np.full((batch, s_max), vocab.pad_id, dtype=np.int64)
    targets = np.full((batch, s_max), vocab.pad_id, dtype=np.int64)
    target_mask = np.zeros((batch, s_max), dtype=dtype)
    for i, example in enumerate(examples):
        t = len(example.input_ids)
        s = len(example.target_ids)
        input_ids[i, :t] = example.input_ids
        input_langs[i, :t] = example.input_langs
        input_mask[i, :t] = 1.0
        decoder_inputs[i, 0] = vocab.bos_id
        decoder_inputs[i, 1:s] = example.target_ids[:-1]
        targets[i, :s] = example.target_ids
        target_mask[i, :s] = 1.0
    attention_bias = ((1.0 - input_mask) * ATTENTION_MASK_BIAS).astype(dtype)
    return PackedBatch(
        input_ids=input_ids,
        input_langs=input_langs,
        input_mask=input_mask,
        attention_bias=attention_bias,
        decoder_inputs=decoder_inputs,
        targets=targets,
        target_mask=target_mask,
        n_symbols=int(target_mask.sum()),
    )


def teacher_forced_loss(params: ModelParams, batch: PackedBatch) -> Tensor:
    """Cross entropy with teacher forcing, averaged per real target symbol."""
    states, h = encode_batch(params, batch.input_ids, batch.input_langs, batch.input_mask)
    total = None
    steps = batch.targets.shape[1]
    for s in range(steps):
        logits, h, _ = decode_step_batch(
            params, batch.decoder_inputs[:, s], h, states, batch.attention_bias
        )
        losses = ad.cross_entropy(logits, batch.targets[:, s])
        masked = ad.sum_all(ad.mul(losses, Tensor(batch.target_mask[:, s], dtype=losses.data.dtype)))
        total = masked if total is None else ad.add(total, masked)
    return ad.scale(total, 1.0 / batch.n_symbols)


# ---------------------------------------------------------------------------
# user-facing model


@dataclass(frozen=True)
class AttentionTrace:
    """Attention record of one greedy decode.

    weights has one row per emitted symbol (the EOS step included) over
    the input positions; input_langs mirrors the encoded example.
    """

    weights: np.ndarray
    emitted_symbols: tuple[str, ...]
    input_ids: tuple[int, ...]
    input_langs: tuple[int, ...]
    truncated: bool = False

    def __len__(self) -> int:
        return len(self.emitted_symbols)


@dataclass
class Model:
    """Bundle of config, vocabulary, parameters, and per-language symbol sets."""

    config: ModelConfig
    vocab: Vocabulary
    params: ModelParams
    attested: dict[int, list[str]] = field(default_factory=dict)

    @staticmethod
    def new(
        config: ModelConfig,
        vocab: Vocabulary,
        attested: dict[int, list[str]] | None = None,
        dtype=np.float32,
    ) -> "Model":
        return Model(
            config=config,
            vocab=vocab,
            params=init_params(config, len(vocab), dtype=dtype),
            attested=dict(attested or {}),
        )

    # -- single-example inference (plain numpy in and out, no tape) --

    def embed_input(self, symbol_id: int, language_id: int) -> np.ndarray:
        """Combined representation of one symbol in one language."""
        if not 0 <= symbol_id < len(self.vocab):
            raise IndexError(f"symbol id {symbol_id} out of range")
        if not 0 <= language_id < len(Language):
            raise IndexError(f"language id {language_id} out of range")
        tables = projected_tables(self.params)
        return embed_positions(tables, np.array([symbol_id]), np.array([language_id])).data[0]

    def encode(self, example: EncodedExample) -> np.ndarray:
        """Per-position encoder states, shape (input length, hidden)."""
        if not example.input_ids:
            raise ValueError("cannot encode an empty example")
        ids = np.asarray(example.input_ids, dtype=np.int64)[None, :]
        langs = np.asarray(example.input_langs, dtype=np.int64)[None, :]
        states, _ = encode_batch(self.params, ids, langs)
        return states.data[0]

    def decode_step(
        self, prev_symbol_id: int, decoder_state: np.ndarray, encoder_states: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """One greedy-decoding step; returns (logits, new state, weights)."""
        dtype = self.params.symbol_embeddings.data.dtype
        logits, new_state, weights = decode_step_batch(
            self.params,
            np.array([prev_symbol_id], dtype=np.int64),
            Tensor(decoder_state[None, :], dtype=dtype),
            Tensor(encoder_states[None, :, :], dtype=dtype),
        )
        return logits.data[0], new_state.data[0], weights.data[0]

    def greedy_decode(self, example: EncodedExample) -> tuple[Word, AttentionTrace]:
        """Argmax decoding from BOS until EOS or max_decode_len.

        Ties break toward the lowest symbol id; EOS is stripped from the
        returned word but its step is kept in the trace.
        """
        encoder_states = self.encode(example)
        state = encoder_states[-1]
        prev = self.vocab.bos_id
        weights_rows = []
        emitted: list[str] = []
        symbols: list[str] = []
        truncated = True
        for _ in range(self.config.max_decode_len):
            logits, state, weights = self.decode_step(prev, state, encoder_states)
            chosen = int(np.argmax(logits))
            weights_rows.append(weights)
            emitted.append(self.vocab.symbol(chosen))
            prev = chosen
            if chosen == self.vocab.eos_id:
                truncated = False
                break
            symbols.append(self.vocab.symbol(chosen))
        trace = AttentionTrace(
            weights=np.stack(weights_rows, axis=0),
            emitted_symbols=tuple(emitted),
            input_ids=example.input_ids,
            input_langs=example.input_langs,
            truncated=truncated,
        )
        return Word(tuple(symbols), self.vocab.mode), trace

    # -- persistence --

    def save(self, path):
        save_checkpoint(self, path)

    @staticmethod
    def load(path) -> "Model":
        return load_checkpoint(path)


def attend(decoder_state: np.ndarray, encoder_states: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Standalone dot-product attention over plain arrays."""
    dtype = np.asarray(encoder_states).dtype
    context, weights = attend_batch(
        Tensor(decoder_state[None, :], dtype=dtype), Tensor(encoder_states[None, :, :], dtype=dtype)
    )
    return context.data[0], weights.data[0]


def expected_shapes(config: ModelConfig, vocab_size: int) -> list[tuple[str, tuple[int, ...]]]:
    """Checkpoint array manifest implied by a config and vocabulary size."""
    e, l, h, m = config.embed_dim, config.lang_embed_dim, config.hidden_dim, config.mlp_hidden
    gate_names = ("reset", "update", "candidate")
    shapes: list[tuple[str, tuple[int, ...]]] = [
        ("symbol_embeddings", (vocab_size, e)),
        ("language_embeddings", (len(Language), l)),
        ("symbol_projection", (e, e)),
        ("language_projection", (l, e)),
    ]
    for prefix in ("encoder", "decoder"):
        for gate in gate_names:
            shapes.append((f"{prefix}.{gate}_in", (e, h)))
            shapes.append((f"{prefix}.{gate}_rec", (h, h)))
            shapes.append((f"{prefix}.{gate}_bias", (h,)))
    shapes += [
        ("mlp_hidden_weight", (2 * h, m)),
        ("mlp_hidden_bias", (m,)),
        ("mlp_out_weight", (m, vocab_size)),
        ("mlp_out_bias", (vocab_size,)),
    ]
    return shapes


def save_checkpoint(model: Model, path):
    """JSON header line plus little-endian float32 arrays in declared order."""
    named = model.params.named()
    header = {
        "format": CHECKPOINT_FORMAT,
        "config": model.config.to_dict(),
        "vocab": json.loads(model.vocab.to_json()),
        "attested": {str(lang): symbols for lang, symbols in model.attested.items()},
        "arrays": [[name, list(t.data.shape)] for name, t in named],
    }
    with open(path, "wb") as handle:
        handle.write(json.dumps(header, ensure_ascii=False, sort_keys=True).encode("utf-8"))
        handle.write(b"\n")
        for _, t in named:
            handle.write(np.ascontiguousarray(t.data, dtype="<f4").tobytes())


class CheckpointError(ValueError):
    pass


def load_checkpoint(path) -> Model:
    with open(path, "rb") as handle:
        raw = handle.readline()
        if not raw.endswith(b"\n"):
            raise CheckpointError("truncated checkpoint: missing header")
        try:
            header = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as err:
            raise CheckpointError(f"corrupt checkpoint header: {err}") from None
        if header.get("format") != CHECKPOINT_FORMAT:
            raise CheckpointError(f"unsupported checkpoint format {header.get('format')!r}")
        config = ModelConfig(**header["config"])
        vocab_payload = dict(header["vocab"])
        vocab = Vocabulary.from_json(json.dumps(vocab_payload))
        declared = [(name, tuple(shape)) for name, shape in header["arrays"]]
        expected = expected_shapes(config, len(vocab))
        if declared != expected:
            raise CheckpointError(
                "checkpoint arrays do not match config/vocabulary: "
                f"declared {declared[:3]}..., expected {expected[:3]}..."
            )
        arrays = []
        for name, shape in declared:
            count = int(np.prod(shape)) if shape else 1
            payload = handle.read(count * 4)
            if len(payload) != count * 4:
                raise CheckpointError(f"truncated checkpoint: array {name} incomplete")
            arrays.append(np.frombuffer(payload, dtype="<f4").reshape(shape).copy())
        if handle.read(1):
            raise CheckpointError("trailing bytes after declared arrays")
    tensors = [Tensor(a, dtype=np.float32) for a in arrays]
    names = [name for name, _ in declared]
    table = dict(zip(names, tensors))
    params = ModelParams(
        symbol_embeddings=table["symbol_embeddings"],
        language_embeddings=table["language_embeddings"],
        symbol_projection=table["symbol_projection"],
        language_projection=table["language_projection"],
        encoder=_gru_from_table(table, "encoder"),
        decoder=_gru_from_table(table, "decoder"),
        mlp_hidden_weight=table["mlp_hidden_weight"],
        mlp_hidden_bias=table["mlp_hidden_bias"],
        mlp_out_weight=table["mlp_out_weight"],
        mlp_out_bias=table["mlp_out_bias"],
    )
    attested = {int(lang): list(symbols) for lang, symbols in header.get("attested", {}).items()}
    return Model(config=config, vocab=vocab, params=params, attested=attested)


def _gru_from_table(table: dict[str, Tensor], prefix: str) -> GRUParams:
    return GRUParams(
        **{
            name: table[f"{prefix}.{name}"]
            for name in (
                "reset_in",
                "reset_rec",
                "reset_bias",
                "update_in",
                "update_rec",
                "update_bias",
                "candidate_in",
                "candidate_rec",
                "candidate_bias",
            )
        }
    )
