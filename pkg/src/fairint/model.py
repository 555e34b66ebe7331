"""The fairness-aware interaction network and its vanilla MLP baseline.

The fair model runs in five stages, each exposed as its own method so
they can be tested and inspected separately:

  1. embed_features: every non-sensitive column becomes a small dense
     embedding (table lookup for categoricals, learned direction scaled
     by the standardized value for numericals).
  2. sar_forward: a four-layer MLP reads all embeddings and reconstructs
     a pseudo-sensitive embedding, plus a scalar probability that the row
     belongs to group 1.
  3. bid_attention: the pseudo-sensitive embedding is the only attention
     query; each head scores every feature once (|C| scores per row, not
     |C| squared) and normalizes with a softmax.
  4. interaction_embedding + residual_fuse: attention-weighted value
     projections, concatenated across heads, plus a residual projection
     of the pseudo-sensitive embedding, through a ReLU.
  5. predict: a small head maps the fused embedding to a probability.

Weight matrices are stored in (input, output) orientation so the forward
pass is plain right-multiplication.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor
from .data import KIND_CATEGORICAL, ROLE_NON_SENSITIVE, FeatureColumn
from .errors import ConfigError, DataError, UsageError

__all__ = [
    "ModelConfig",
    "ForwardTrace",
    "FairIntModel",
    "VanillaModel",
    "save_model",
    "load_model",
]


@dataclass(frozen=True)
class ModelConfig:
    """Architecture sizes. Defaults follow the reference setting.

    ``sar_hidden`` lists the reconstructor's hidden widths; together with
    its linear output projection to ``embed_dim`` the default makes a
    four-layer MLP. ``value_dim`` is the per-head width of the attention
    value space and defaults to ``embed_dim``. ``head_hidden`` is empty
    for a single-layer prediction head.
    """

    embed_dim: int = 4
    attention_heads: int = 1
    value_dim: int | None = None
    sar_hidden: tuple = (16, 16, 8)
    head_hidden: tuple = ()
    baseline_hidden: tuple = (64, 32)
    dropout: float = 0.0

    def __post_init__(self):
        if self.embed_dim < 1:
            raise ConfigError(f"embed_dim must be positive, got {self.embed_dim}")
        if self.attention_heads < 1:
            raise ConfigError(f"attention_heads must be positive, got {self.attention_heads}")
        if self.value_dim is not None and self.value_dim < 1:
            raise ConfigError(f"value_dim must be positive, got {self.value_dim}")
        for name in ("sar_hidden", "head_hidden", "baseline_hidden"):
            widths = getattr(self, name)
            if any((not isinstance(w, int)) or w < 1 for w in widths):
                raise ConfigError(f"{name} widths must be positive ints, got {widths}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")

    @property
    def head_width(self) -> int:
        return self.value_dim if self.value_dim is not None else self.embed_dim

    def to_dict(self) -> dict:
        return {
            "embed_dim": self.embed_dim,
            "attention_heads": self.attention_heads,
            "value_dim": self.value_dim,
            "sar_hidden": list(self.sar_hidden),
            "head_hidden": list(self.head_hidden),
            "baseline_hidden": list(self.baseline_hidden),
            "dropout": self.dropout,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(doc) - known
        if extra:
            raise ConfigError(f"unknown model options: {sorted(extra)}")
        kwargs = dict(doc)
        for name in ("sar_hidden", "head_hidden", "baseline_hidden"):
            if name in kwargs:
                kwargs[name] = tuple(kwargs[name])
        return cls(**kwargs)


@dataclass
class ForwardTrace:
    """Everything one forward pass computed, kept for losses and reports."""

    embeddings: dict          # feature name -> (B, d) Tensor
    pseudo_embed: Tensor      # (B, d)
    pseudo_scalar: Tensor     # (B, 1), in (0, 1)
    attention: list           # per head: (B, |C|) Tensor, rows sum to 1
    interaction: Tensor       # (B, head_width * heads)
    fused: Tensor             # (B, head_width * heads)
    prediction: Tensor        # (B, 1), in (0, 1)
    feature_order: list       # attention column c belongs to feature_order[c]


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class _EmbeddingBase:
    """Shared embedding construction and dropout plumbing."""

    def __init__(self, input_columns, config: ModelConfig, seed: int):
        if not input_columns:
            raise ConfigError("model needs at least one non-sensitive input feature")
        for col in input_columns:
            if col.role != "non_sensitive":
                raise UsageError(f"column {col.name!r} with role {col.role!r} cannot be a model input")
        self.input_columns = list(input_columns)
        self.feature_names = [c.name for c in self.input_columns]
        self.config = config
        self.params: dict[str, Parameter] = {}
        self._rng = np.random.default_rng(seed)

    def _add(self, name: str, values: np.ndarray) -> Parameter:
        if name in self.params:
            raise UsageError(f"duplicate parameter name {name!r}")
        p = Parameter(name, Tensor(values))
        self.params[name] = p
        return p

    def _add_embeddings(self):
        d = self.config.embed_dim
        for col in self.input_columns:
            if col.kind == KIND_CATEGORICAL:
                self._add(f"embed.{col.name}", self._rng.normal(0.0, 0.1, size=(d, col.table_size)))
            else:
                self._add(f"embed.{col.name}", self._rng.normal(0.0, 0.1, size=(1, d)))

    def _add_mlp(self, prefix: str, widths: list[int]):
        # widths = [in, h1, ..., out]; biases start at zero
        for i in range(len(widths) - 1):
            self._add(f"{prefix}.layer{i}.w", _glorot(self._rng, widths[i], widths[i + 1]))
            self._add(f"{prefix}.layer{i}.b", np.zeros(widths[i + 1]))

    def _run_mlp(self, prefix: str, n_layers: int, x: Tensor, training: bool, rng) -> Tensor:
        # ReLU plus dropout on every layer except the last, which stays linear
        for i in range(n_layers):
            w = self.params[f"{prefix}.layer{i}.w"].tensor
            b = self.params[f"{prefix}.layer{i}.b"].tensor
            x = ad.matmul(x, w) + b
            if i < n_layers - 1:
                x = ad.relu(x)
                if training and self.config.dropout > 0.0:
                    if rng is None:
                        raise UsageError("training-mode forward with dropout needs a generator")
                    x = ad.dropout(x, self.config.dropout, rng, training=True)
        return x

    def parameters(self) -> list[Parameter]:
        return list(self.params.values())

    def parameter_arrays(self) -> dict[str, np.ndarray]:
        return {name: p.tensor.values for name, p in self.params.items()}

    def load_arrays(self, arrays: dict) -> None:
        """Overwrite every parameter from a name -> array mapping."""
        missing = set(self.params) - set(arrays)
        extra = set(arrays) - set(self.params)
        if missing or extra:
            raise DataError(
                f"parameter names do not match this architecture"
                f" (missing {sorted(missing)}, unexpected {sorted(extra)})"
            )
        for name, p in self.params.items():
            arr = np.asarray(arrays[name], dtype=np.float64)
            if arr.shape != p.tensor.values.shape:
                raise DataError(
                    f"parameter {name!r} has shape {arr.shape}, expected {p.tensor.values.shape}"
                )
            p.tensor.values = arr.copy()

    def embed_features(self, features: dict) -> dict:
        """Map a batch's raw feature arrays to (B, d) embedding tensors.

        A numerical value of exactly 0 embeds to the zero vector; a
        categorical id selects one table column.
        """
        out = {}
        for col in self.input_columns:
            if col.name not in features:
                raise DataError(f"batch is missing feature column {col.name!r}")
            values = features[col.name]
            table = self.params[f"embed.{col.name}"].tensor
            if col.kind == KIND_CATEGORICAL:
                out[col.name] = ad.embedding_lookup(table, np.asarray(values, dtype=np.int64))
            else:
                x = Tensor(np.asarray(values, dtype=np.float64).reshape(-1, 1))
                out[col.name] = ad.matmul(x, table)
        return out


class FairIntModel(_EmbeddingBase):
    """Interaction model with pseudo-sensitive attention and residual fusion."""

    def __init__(self, input_columns, config: ModelConfig, seed: int):
        super().__init__(input_columns, config, seed)
        d = config.embed_dim
        dv = config.head_width
        n_feat = len(self.input_columns)

        self._add_embeddings()
        sar_widths = [n_feat * d, *config.sar_hidden, d]
        self._sar_layers = len(sar_widths) - 1
        self._add_mlp("sar", sar_widths)
        self._add("sar_scalar.w", _glorot(self._rng, d, 1))
        for h in range(config.attention_heads):
            self._add(f"bid.h{h}.query", _glorot(self._rng, d, dv))
            self._add(f"bid.h{h}.key", _glorot(self._rng, d, dv))
            self._add(f"bid.h{h}.value", _glorot(self._rng, d, dv))
        self._add("fuse.w_res", _glorot(self._rng, d, dv * config.attention_heads))
        head_widths = [dv * config.attention_heads, *config.head_hidden, 1]
        self._head_layers = len(head_widths) - 1
        self._add_mlp("head", head_widths)

    def sar_forward(self, embeddings: dict, training: bool = False, rng=None):
        """Reconstruct the sensitive attribute from all feature embeddings.

        Returns (pseudo_embed (B, d), pseudo_scalar (B, 1)). The scalar is
        a separate linear readout of the pseudo embedding through a
        sigmoid, so zero weights give exactly 0.5.
        """
        joined = ad.concat_lastdim([embeddings[name] for name in self.feature_names])
        pseudo = self._run_mlp("sar", self._sar_layers, joined, training, rng)
        scalar = ad.sigmoid(ad.matmul(pseudo, self.params["sar_scalar.w"].tensor))
        return pseudo, scalar

    def bid_attention(self, pseudo_embed: Tensor, embeddings: dict, head: int, order=None) -> Tensor:
        """Attention of the pseudo-sensitive embedding over the features.

        One dot-product score per feature per row (the pseudo embedding is
        the only query), then a softmax across features. Returns (B, |C|)
        with columns following ``order`` (default: schema feature order).
        """
        names = list(order) if order is not None else self.feature_names
        if not 0 <= head < self.config.attention_heads:
            raise UsageError(f"head {head} out of range")
        q = ad.matmul(pseudo_embed, self.params[f"bid.h{head}.query"].tensor)
        scores = []
        for name in names:
            k = ad.matmul(embeddings[name], self.params[f"bid.h{head}.key"].tensor)
            scores.append(ad.sum_lastdim(q * k))
        return ad.softmax_lastdim(ad.concat_lastdim(scores))

    def interaction_embedding(self, attention: list, embeddings: dict, order=None) -> Tensor:
        """Attention-weighted sum of value projections, concatenated across heads."""
        names = list(order) if order is not None else self.feature_names
        head_outputs = []
        for h, weights in enumerate(attention):
            value_w = self.params[f"bid.h{h}.value"].tensor
            total = None
            for c, name in enumerate(names):
                v = ad.matmul(embeddings[name], value_w)
                term = ad.slice_lastdim(weights, c, c + 1) * v
                total = term if total is None else total + term
            head_outputs.append(total)
        return ad.concat_lastdim(head_outputs) if len(head_outputs) > 1 else head_outputs[0]

    def residual_fuse(self, interaction: Tensor, pseudo_embed: Tensor) -> Tensor:
        """ReLU of the interaction embedding plus a projection of the pseudo embedding."""
        return ad.relu(interaction + ad.matmul(pseudo_embed, self.params["fuse.w_res"].tensor))

    def predict(self, fused: Tensor, training: bool = False, rng=None) -> Tensor:
        """Probability head over the fused embedding."""
        return ad.sigmoid(self._run_mlp("head", self._head_layers, fused, training, rng))

    def forward(self, features: dict, training: bool = False, rng=None) -> ForwardTrace:
        """Full pass; see the module docstring for the stage breakdown."""
        embeddings = self.embed_features(features)
        pseudo, scalar = self.sar_forward(embeddings, training, rng)
        attention = [
            self.bid_attention(pseudo, embeddings, h) for h in range(self.config.attention_heads)
        ]
        interaction = self.interaction_embedding(attention, embeddings)
        fused = self.residual_fuse(interaction, pseudo)
        prediction = self.predict(fused, training, rng)
        return ForwardTrace(
            embeddings=embeddings,
            pseudo_embed=pseudo,
            pseudo_scalar=scalar,
            attention=attention,
            interaction=interaction,
            fused=fused,
            prediction=prediction,
            feature_order=list(self.feature_names),
        )


class VanillaModel(_EmbeddingBase):
    """Baseline: concatenated feature embeddings through a plain MLP."""

    def __init__(self, input_columns, config: ModelConfig, seed: int):
        super().__init__(input_columns, config, seed)
        self._add_embeddings()
        widths = [len(self.input_columns) * config.embed_dim, *config.baseline_hidden, 1]
        self._n_layers = len(widths) - 1
        self._add_mlp("mlp", widths)

    def forward(self, features: dict, training: bool = False, rng=None) -> Tensor:
        """Probability of the positive class, shape (B, 1)."""
        embeddings = self.embed_features(features)
        joined = ad.concat_lastdim([embeddings[name] for name in self.feature_names])
        return ad.sigmoid(self._run_mlp("mlp", self._n_layers, joined, training, rng))


# -- persistence ---------------------------------------------------------------

_RESERVED_META = ("kind", "model", "schema", "vocabularies", "standardize_stats")


def save_model(model, dataset, path, extra_metadata: dict | None = None) -> None:
    """Write the parameters plus everything needed to score new data.

    The metadata block carries the architecture, the full column schema,
    and the dataset's encoder state (category vocabularies and numeric
    standardization statistics), so a saved model can evaluate a fresh
    CSV without the original experiment configuration.
    """
    meta = {
        "kind": "fairint" if isinstance(model, FairIntModel) else "vanilla",
        "model": model.config.to_dict(),
        "schema": [
            {"name": c.name, "kind": c.kind, "cardinality": c.cardinality, "role": c.role}
            for c in dataset.schema
        ],
        "vocabularies": dataset.vocabularies,
        "standardize_stats": (
            None
            if dataset.standardize_stats is None
            else {k: list(v) for k, v in dataset.standardize_stats.items()}
        ),
    }
    if extra_metadata:
        clash = set(_RESERVED_META) & set(extra_metadata)
        if clash:
            raise UsageError(f"extra metadata would shadow reserved keys {sorted(clash)}")
        meta.update(extra_metadata)
    ad.save_parameters(path, model.parameter_arrays(), meta)


def load_model(path):
    """Rebuild a model saved by :func:`save_model`.

    Returns ``(model, schema, metadata)``: the model with its trained
    arrays loaded, the full column schema, and the raw metadata block
    (encoder state included) for re-encoding new data.
    """
    arrays, meta = ad.load_parameters(path)
    missing = set(_RESERVED_META) - set(meta)
    if missing:
        raise DataError(f"{path}: model file metadata is missing {sorted(missing)}")
    if meta["kind"] not in ("fairint", "vanilla"):
        raise DataError(f"{path}: unknown model kind {meta['kind']!r}")
    schema = [
        FeatureColumn(name=d["name"], kind=d["kind"], role=d["role"], cardinality=d["cardinality"])
        for d in meta["schema"]
    ]
    config = ModelConfig.from_dict(meta["model"])
    inputs = [c for c in schema if c.role == ROLE_NON_SENSITIVE]
    cls = FairIntModel if meta["kind"] == "fairint" else VanillaModel
    model = cls(inputs, config, seed=0)
    model.load_arrays(arrays)
    return model, schema, meta
