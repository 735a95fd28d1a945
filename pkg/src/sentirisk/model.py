"""Model assembly: the CNN-GRU network, its two ablations, and checkpoints.

Per-day encoding (CnnGru, CnnOnly): each document is embedded, convolved,
ReLU'd, and global-max-pooled; pooled vectors are averaged over the day's
documents and concatenated with the day's market features. GruOnly replaces
the convolutional text encoder with the mean of the day's token embeddings.
CnnGru and GruOnly run a GRU over the window and pool its hidden states with
additive attention (or take the last hidden state); CnnOnly averages the day
vectors directly. Two dense heads emit the scalar return prediction and the
3-class sentiment logits.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .data import N_MARKET_FEATURES, WindowSample
from .errors import CheckpointError, NumericError, ShapeError
from .layers import (
    AttentionCache,
    AttentionParams,
    Conv1DCache,
    Conv1DParams,
    DenseParams,
    EmbeddingTable,
    GRUParams,
    GRUStepCache,
    attention_backward,
    attention_pool,
    conv1d_backward,
    conv1d_forward,
    dense_backward,
    dense_forward,
    embed_backward,
    embed_lookup,
    global_max_pool,
    gru_forward,
    gru_sequence_backward,
    init_attention,
    init_conv,
    init_dense,
    init_embedding,
    init_gru,
    max_pool_backward,
    pad_or_truncate,
    relu_backward,
)
from .losses import cross_entropy_grad, mse_grad
from .matrix import Matrix

CHECKPOINT_FORMAT_VERSION = 1


class ArchKind(str, enum.Enum):
    CNN_GRU = "cnn-gru"
    CNN_ONLY = "cnn"
    GRU_ONLY = "gru"


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    embed_dim: int = 64
    num_filters: int = 64
    kernel_width: int = 3
    conv_stride: int = 3
    gru_hidden: int = 32
    window: int = 20
    max_doc_len: int = 30
    attention_enabled: bool = True
    attn_size: int | None = None  # defaults to gru_hidden
    num_classes: int = 3
    mse_weight: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        counts = {
            "vocab_size": self.vocab_size,
            "embed_dim": self.embed_dim,
            "num_filters": self.num_filters,
            "kernel_width": self.kernel_width,
            "conv_stride": self.conv_stride,
            "gru_hidden": self.gru_hidden,
            "window": self.window,
            "max_doc_len": self.max_doc_len,
            "num_classes": self.num_classes,
        }
        for name, v in counts.items():
            if v < 1:
                raise ShapeError(f"{name} must be positive, got {v}")
        if self.vocab_size < 2:
            raise ShapeError("vocab_size must cover the pad and unknown ids")
        if self.max_doc_len < self.kernel_width:
            raise ShapeError(
                f"max_doc_len {self.max_doc_len} shorter than kernel width {self.kernel_width}"
            )
        if not 0.0 <= self.mse_weight <= 1.0:
            raise ShapeError(f"mse_weight must lie in [0, 1], got {self.mse_weight}")
        if self.attn_size is not None and self.attn_size < 1:
            raise ShapeError(f"attn_size must be positive, got {self.attn_size}")

    @property
    def attention_size(self) -> int:
        return self.attn_size if self.attn_size is not None else self.gru_hidden

    def to_dict(self) -> dict:
        return {
            "vocab_size": self.vocab_size,
            "embed_dim": self.embed_dim,
            "num_filters": self.num_filters,
            "kernel_width": self.kernel_width,
            "conv_stride": self.conv_stride,
            "gru_hidden": self.gru_hidden,
            "window": self.window,
            "max_doc_len": self.max_doc_len,
            "attention_enabled": self.attention_enabled,
            "attn_size": self.attn_size,
            "num_classes": self.num_classes,
            "mse_weight": self.mse_weight,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "ModelConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(obj) - known
        if unknown:
            raise CheckpointError(f"unknown config keys: {sorted(unknown)}")
        return cls(**obj)


@dataclass
class CnnGruModel:
    cfg: ModelConfig
    arch: ArchKind
    embedding: EmbeddingTable
    conv: Conv1DParams | None
    gru: GRUParams | None
    attention: AttentionParams | None
    head_reg: DenseParams
    head_cls: DenseParams

    @property
    def day_vec_size(self) -> int:
        text = self.cfg.embed_dim if self.arch is ArchKind.GRU_ONLY else self.cfg.num_filters
        return text + N_MARKET_FEATURES

    @property
    def head_input_size(self) -> int:
        if self.arch is ArchKind.CNN_ONLY:
            return self.day_vec_size
        return self.cfg.gru_hidden


def build_model(cfg: ModelConfig, arch: ArchKind) -> CnnGruModel:
    """Deterministic seeded build; tensor init order is fixed."""
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    embedding = init_embedding(rng, cfg.vocab_size, cfg.embed_dim)
    conv = None
    if arch is not ArchKind.GRU_ONLY:
        conv = init_conv(rng, cfg.num_filters, cfg.kernel_width, cfg.embed_dim,
                         cfg.conv_stride)
    text_dim = cfg.embed_dim if arch is ArchKind.GRU_ONLY else cfg.num_filters
    day_dim = text_dim + N_MARKET_FEATURES
    gru = None
    attention = None
    if arch is not ArchKind.CNN_ONLY:
        gru = init_gru(rng, cfg.gru_hidden, day_dim)
        if cfg.attention_enabled:
            attention = init_attention(rng, cfg.attention_size, cfg.gru_hidden)
    head_in = day_dim if arch is ArchKind.CNN_ONLY else cfg.gru_hidden
    head_reg = init_dense(rng, 1, head_in)
    head_cls = init_dense(rng, cfg.num_classes, head_in)
    return CnnGruModel(
        cfg=cfg, arch=arch, embedding=embedding, conv=conv, gru=gru,
        attention=attention, head_reg=head_reg, head_cls=head_cls,
    )


# ---------------------------------------------------------------------------
# named parameter access
# ---------------------------------------------------------------------------


def named_params(model: CnnGruModel) -> dict[str, Matrix]:
    out: dict[str, Matrix] = {"embedding": model.embedding.table}
    if model.conv is not None:
        for i, k in enumerate(model.conv.kernels):
            out[f"conv/k{i}"] = k
    if model.gru is not None:
        out["gru/w_z"] = model.gru.w_z
        out["gru/w_r"] = model.gru.w_r
        out["gru/w"] = model.gru.w
    if model.attention is not None:
        out["attn/w_a"] = model.attention.w_a
        out["attn/u"] = model.attention.u
    out["head_reg/w"] = model.head_reg.w
    out["head_reg/b"] = model.head_reg.b
    out["head_cls/w"] = model.head_cls.w
    out["head_cls/b"] = model.head_cls.b
    return out


def set_named_params(model: CnnGruModel, params: dict[str, Matrix]) -> CnnGruModel:
    expected = named_params(model)
    if set(params) != set(expected):
        missing = sorted(set(expected) - set(params))
        extra = sorted(set(params) - set(expected))
        raise ShapeError(f"parameter name mismatch: missing {missing}, extra {extra}")
    for name, old in expected.items():
        if params[name].shape != old.shape:
            raise ShapeError(
                f"tensor {name} has shape {params[name].shape}, expected {old.shape}"
            )
    conv = model.conv
    if conv is not None:
        conv = Conv1DParams(
            kernels=[params[f"conv/k{i}"] for i in range(conv.num_filters)],
            stride=conv.stride,
        )
    gru = model.gru
    if gru is not None:
        gru = GRUParams(w_z=params["gru/w_z"], w_r=params["gru/w_r"], w=params["gru/w"])
    attention = model.attention
    if attention is not None:
        attention = AttentionParams(w_a=params["attn/w_a"], u=params["attn/u"])
    return replace(
        model,
        embedding=EmbeddingTable(params["embedding"]),
        conv=conv,
        gru=gru,
        attention=attention,
        head_reg=DenseParams(w=params["head_reg/w"], b=params["head_reg/b"]),
        head_cls=DenseParams(w=params["head_cls/w"], b=params["head_cls/b"]),
    )


def count_params(model: CnnGruModel) -> int:
    return sum(t.rows * t.cols for t in named_params(model).values())


def gru_param_count(hidden: int, input_size: int) -> int:
    """Closed form 3*h*(h+d); a same-shape LSTM would hold 4*h*(h+d)."""
    return 3 * hidden * (hidden + input_size)


# ---------------------------------------------------------------------------
# forward
# ---------------------------------------------------------------------------


@dataclass
class DocCache:
    padded_ids: list[int]
    embedded: Matrix
    conv_pre: Matrix
    conv_cache: Conv1DCache
    memo: list[int]


@dataclass
class DayTextCache:
    docs: list[DocCache]  # conv path
    mean_ids: list[int]  # mean-embedding path (GruOnly)


@dataclass
class ModelCache:
    sample: WindowSample
    day_text: list[DayTextCache | None]
    day_vecs: list[Matrix]
    gru_caches: list[GRUStepCache] | None
    attn_cache: AttentionCache | None
    ctx: Matrix
    pred: Matrix
    logits: Matrix


def _day_text_conv(model: CnnGruModel, seqs: list[list[int]]
                   ) -> tuple[Matrix, DayTextCache]:
    cfg = model.cfg
    docs: list[DocCache] = []
    total = np.zeros((cfg.num_filters, 1))
    for seq in seqs:
        padded = pad_or_truncate(seq, cfg.max_doc_len)
        emb = embed_lookup(model.embedding, padded, cfg.max_doc_len)
        conv_pre, conv_cache = conv1d_forward(model.conv, emb)
        relu = Matrix._wrap(np.maximum(conv_pre.data, 0.0))
        pooled, memo = global_max_pool(relu)
        total += pooled.data
        docs.append(DocCache(
            padded_ids=padded, embedded=emb, conv_pre=conv_pre,
            conv_cache=conv_cache, memo=memo,
        ))
    vec = Matrix._wrap(total / len(seqs))
    return vec, DayTextCache(docs=docs, mean_ids=[])


def _day_text_mean_embed(model: CnnGruModel, seqs: list[list[int]]
                         ) -> tuple[Matrix, DayTextCache]:
    cfg = model.cfg
    ids: list[int] = []
    for seq in seqs:
        ids.extend(tok for tok in pad_or_truncate(seq, cfg.max_doc_len) if tok != 0)
    if not ids:
        return Matrix.zeros(cfg.embed_dim, 1), DayTextCache(docs=[], mean_ids=[])
    rows = model.embedding.table.data[np.array(ids, dtype=np.intp)]
    vec = Matrix._wrap(rows.mean(axis=0).reshape(-1, 1))
    return vec, DayTextCache(docs=[], mean_ids=ids)


def model_forward(model: CnnGruModel, sample: WindowSample
                  ) -> tuple[float, Matrix, ModelCache]:
    cfg = model.cfg
    if len(sample.inputs) != cfg.window:
        raise ShapeError(
            f"sample has {len(sample.inputs)} days, model expects {cfg.window}"
        )
    text_dim = cfg.embed_dim if model.arch is ArchKind.GRU_ONLY else cfg.num_filters
    day_text: list[DayTextCache | None] = []
    day_vecs: list[Matrix] = []
    for day in sample.inputs:
        if day.features is None:
            raise ShapeError(f"day {day.date} has no normalized features")
        if day.features.shape != (N_MARKET_FEATURES, 1):
            raise ShapeError(
                f"day {day.date} features shape {day.features.shape}, "
                f"expected {(N_MARKET_FEATURES, 1)}"
            )
        if day.has_text and day.token_seqs:
            if model.arch is ArchKind.GRU_ONLY:
                text_vec, cache = _day_text_mean_embed(model, day.token_seqs)
            else:
                text_vec, cache = _day_text_conv(model, day.token_seqs)
        else:
            text_vec, cache = Matrix.zeros(text_dim, 1), None
        day_text.append(cache)
        day_vecs.append(text_vec.concat_rows(day.features))

    gru_caches = None
    attn_cache = None
    if model.arch is ArchKind.CNN_ONLY:
        ctx = Matrix._wrap(
            np.mean(np.stack([v.data for v in day_vecs], axis=0), axis=0)
        )
    else:
        hiddens, gru_caches = gru_forward(model.gru, day_vecs)
        if model.attention is not None:
            ctx, _, attn_cache = attention_pool(model.attention, hiddens)
        else:
            ctx = hiddens[-1]

    pred = dense_forward(model.head_reg, ctx)
    logits = dense_forward(model.head_cls, ctx)
    cache = ModelCache(
        sample=sample, day_text=day_text, day_vecs=day_vecs,
        gru_caches=gru_caches, attn_cache=attn_cache,
        ctx=ctx, pred=pred, logits=logits,
    )
    return float(pred.item()), logits, cache


# ---------------------------------------------------------------------------
# backward
# ---------------------------------------------------------------------------


def model_backward(model: CnnGruModel, cache: ModelCache,
                   target_return: float, target_class: int) -> dict[str, Matrix]:
    """Exact gradients of mse_weight*MSE + (1-mse_weight)*CE for every tensor."""
    cfg = model.cfg
    lam = cfg.mse_weight
    target = Matrix(1, 1, [target_return])

    d_pred = Matrix._wrap(lam * mse_grad(cache.pred, target).data)
    d_logits = Matrix._wrap((1.0 - lam) * cross_entropy_grad(cache.logits, target_class).data)

    d_ctx_reg, d_w_reg, d_b_reg = dense_backward(model.head_reg, cache.ctx, d_pred)
    d_ctx_cls, d_w_cls, d_b_cls = dense_backward(model.head_cls, cache.ctx, d_logits)
    d_ctx = d_ctx_reg + d_ctx_cls

    grads: dict[str, Matrix] = {
        "head_reg/w": d_w_reg, "head_reg/b": d_b_reg,
        "head_cls/w": d_w_cls, "head_cls/b": d_b_cls,
    }

    window = cfg.window
    if model.arch is ArchKind.CNN_ONLY:
        d_day_vecs = [Matrix._wrap(d_ctx.data / window) for _ in range(window)]
    else:
        if model.attention is not None:
            d_hiddens, d_w_a, d_u = attention_backward(model.attention, cache.attn_cache, d_ctx)
            grads["attn/w_a"] = d_w_a
            grads["attn/u"] = d_u
            upstream: list[Matrix | None] = list(d_hiddens)
        else:
            upstream = [None] * (window - 1) + [d_ctx]
        d_day_vecs, _, gru_grads = gru_sequence_backward(model.gru, cache.gru_caches, upstream)
        grads["gru/w_z"] = gru_grads.d_w_z
        grads["gru/w_r"] = gru_grads.d_w_r
        grads["gru/w"] = gru_grads.d_w

    text_dim = cfg.embed_dim if model.arch is ArchKind.GRU_ONLY else cfg.num_filters
    d_embed = np.zeros_like(model.embedding.table.data)
    d_kernels = None
    if model.conv is not None:
        d_kernels = [np.zeros_like(k.data) for k in model.conv.kernels]

    for day_cache, d_vec in zip(cache.day_text, d_day_vecs):
        if day_cache is None:
            continue  # zero text vector: nothing upstream of it
        d_text = d_vec.data[:text_dim]
        if model.arch is ArchKind.GRU_ONLY:
            ids = day_cache.mean_ids
            if ids:
                share = d_text / len(ids)
                np.add.at(d_embed, np.array(ids, dtype=np.intp), share.T)
        else:
            n_docs = len(day_cache.docs)
            for doc in day_cache.docs:
                d_pooled = Matrix._wrap(d_text / n_docs)
                d_relu = max_pool_backward(doc.memo, doc.conv_cache.out_len, d_pooled)
                d_conv = relu_backward(doc.conv_pre, d_relu)
                d_emb, dk = conv1d_backward(model.conv, doc.conv_cache, d_conv)
                for acc, g in zip(d_kernels, dk):
                    acc += g.data
                d_embed_doc = embed_backward(model.embedding, doc.padded_ids, d_emb)
                d_embed += d_embed_doc.data

    d_embed[0, :] = 0.0  # pad row is frozen
    grads["embedding"] = Matrix._wrap(d_embed)
    if d_kernels is not None:
        for i, g in enumerate(d_kernels):
            grads[f"conv/k{i}"] = Matrix._wrap(g)

    expected = set(named_params(model))
    if set(grads) != expected:
        raise ShapeError(f"gradient names {sorted(grads)} do not match {sorted(expected)}")
    return grads


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(model: CnnGruModel, path: str | Path) -> None:
    """Versioned JSON: config block plus named tensors as nested float lists.

    Python's repr-based float serialization round-trips every finite float64
    bit-exactly, which load_checkpoint relies on.
    """
    tensors = {}
    for name, t in named_params(model).items():
        if not np.all(np.isfinite(t.data)):
            raise CheckpointError(f"tensor {name} contains non-finite values")
        tensors[name] = {"rows": t.rows, "cols": t.cols, "values": t.to_lists()}
    obj = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "arch": model.arch.value,
        "config": model.cfg.to_dict(),
        "tensors": tensors,
    }
    Path(path).write_text(json.dumps(obj) + "\n", encoding="utf-8")


def load_checkpoint(path: str | Path) -> CnnGruModel:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"unreadable checkpoint {path}: {exc.msg}") from None
    if not isinstance(obj, dict):
        raise CheckpointError(f"checkpoint {path} is not a json object")
    version = obj.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint format_version {version!r}, "
            f"expected {CHECKPOINT_FORMAT_VERSION}"
        )
    for key in ("arch", "config", "tensors"):
        if key not in obj:
            raise CheckpointError(f"checkpoint missing key {key!r}")
    try:
        arch = ArchKind(obj["arch"])
    except ValueError:
        raise CheckpointError(f"unknown arch {obj['arch']!r}") from None
    try:
        cfg = ModelConfig.from_dict(obj["config"])
    except TypeError as exc:
        raise CheckpointError(f"bad config block: {exc}") from None
    model = build_model(cfg, arch)
    expected = named_params(model)
    stored = obj["tensors"]
    missing = sorted(set(expected) - set(stored))
    if missing:
        raise CheckpointError(f"checkpoint missing tensors: {missing}")
    extra = sorted(set(stored) - set(expected))
    if extra:
        raise CheckpointError(f"checkpoint has unexpected tensors: {extra}")
    params: dict[str, Matrix] = {}
    for name, spec in stored.items():
        try:
            rows, cols, values = spec["rows"], spec["cols"], spec["values"]
        except (KeyError, TypeError) as exc:
            raise CheckpointError(f"tensor {name} malformed: {exc}") from None
        want = expected[name].shape
        if (rows, cols) != want:
            raise CheckpointError(
                f"tensor {name} has shape {(rows, cols)}, expected {want}"
            )
        if not isinstance(values, list) or not all(isinstance(r, list) for r in values):
            raise CheckpointError(f"tensor {name} values must be nested lists")
        flat = [v for row in values for v in row]
        if len(flat) != rows * cols:
            raise CheckpointError(
                f"tensor {name} holds {len(flat)} values, expected {rows * cols}"
            )
        try:
            params[name] = Matrix(rows, cols, flat)
        except (ShapeError, NumericError, ValueError, TypeError) as exc:
            raise CheckpointError(f"tensor {name} invalid: {exc}") from None
    return set_named_params(model, params)
