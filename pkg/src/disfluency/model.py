"""The three networks of the adversarial tagger.

* a small transformer encoder mapping token ids to L x d hidden states,
* a feed-forward generator mapping Gaussian noise to fake L x d sequences,
* a discriminator with a per-token fluent/disfluent head and a pooled
  sentence-level real/fake head.

The discriminator consumes encoder output and generator output through the
identical code path; "real" vs "fake" exists only in the training losses.
Both heads read one shared per-position hidden layer, and the real/fake head
judges the masked mean of that layer, so permuting unmasked positions
permutes token logits and leaves the real/fake probability unchanged.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor
from .errors import ShapeError

ATTN_MASK_BIAS = -1e9  # underflows to exactly 0 after softmax in float32


@dataclass(frozen=True)
class EncoderConfig:
    vocab_size: int
    model_dim: int = 32
    n_layers: int = 2
    n_heads: int = 2
    max_len: int = 32
    ff_dim: int = 64

    def __post_init__(self):
        for name, v in asdict(self).items():
            if v <= 0:
                raise ValueError(f"{name} must be positive")
        if self.model_dim % self.n_heads:
            raise ValueError("model_dim must be divisible by n_heads")


@dataclass(frozen=True)
class GeneratorConfig:
    noise_dim: int = 16
    hidden_dim: int = 64

    def __post_init__(self):
        if self.noise_dim <= 0 or self.hidden_dim <= 0:
            raise ValueError("generator dims must be positive")


@dataclass(frozen=True)
class DiscriminatorConfig:
    hidden_dim: int = 64

    def __post_init__(self):
        if self.hidden_dim <= 0:
            raise ValueError("discriminator hidden_dim must be positive")


@dataclass
class HiddenSequence:
    """A batch of L x d hidden-state sequences plus the token mask."""

    hidden: Tensor  # (B, L, d)
    mask: np.ndarray  # (B, L), {0,1}


@dataclass
class DiscriminatorOutput:
    token_logits: Tensor  # (B, L, 2): [fluent, disfluent]
    p_real: Tensor  # (B,), sigmoid output
    pooled: Tensor  # (B, hidden), penultimate features for feature matching


class _ParamBank:
    """Creates named parameters from one rng stream, in a fixed order."""

    def __init__(self, rng: np.random.Generator, dtype):
        self.rng = rng
        self.dtype = dtype
        self.params: list[Parameter] = []

    def normal(self, name: str, shape: tuple[int, ...], std: float = 0.02) -> Parameter:
        data = (self.rng.standard_normal(shape) * std).astype(self.dtype)
        return self._register(Parameter(name, data))

    def zeros(self, name: str, shape: tuple[int, ...]) -> Parameter:
        return self._register(Parameter(name, np.zeros(shape, dtype=self.dtype)))

    def ones(self, name: str, shape: tuple[int, ...]) -> Parameter:
        return self._register(Parameter(name, np.ones(shape, dtype=self.dtype)))

    def _register(self, p: Parameter) -> Parameter:
        self.params.append(p)
        return p


class _EncoderLayer:
    def __init__(self, bank: _ParamBank, cfg: EncoderConfig, i: int):
        d, f = cfg.model_dim, cfg.ff_dim
        pre = f"encoder.layer{i}"
        self.wq = bank.normal(f"{pre}.attn.wq", (d, d))
        self.bq = bank.zeros(f"{pre}.attn.bq", (d,))
        self.wk = bank.normal(f"{pre}.attn.wk", (d, d))
        self.bk = bank.zeros(f"{pre}.attn.bk", (d,))
        self.wv = bank.normal(f"{pre}.attn.wv", (d, d))
        self.bv = bank.zeros(f"{pre}.attn.bv", (d,))
        self.wo = bank.normal(f"{pre}.attn.wo", (d, d))
        self.bo = bank.zeros(f"{pre}.attn.bo", (d,))
        self.ln1_g = bank.ones(f"{pre}.ln1.gain", (d,))
        self.ln1_b = bank.zeros(f"{pre}.ln1.bias", (d,))
        self.w1 = bank.normal(f"{pre}.ff.w1", (d, f))
        self.b1 = bank.zeros(f"{pre}.ff.b1", (f,))
        self.w2 = bank.normal(f"{pre}.ff.w2", (f, d))
        self.b2 = bank.zeros(f"{pre}.ff.b2", (d,))
        self.ln2_g = bank.ones(f"{pre}.ln2.gain", (d,))
        self.ln2_b = bank.zeros(f"{pre}.ln2.bias", (d,))
        self.n_heads = cfg.n_heads
        self.head_dim = d // cfg.n_heads

    def __call__(self, x: Tensor, attn_bias: Tensor) -> Tensor:
        b, l, d = x.shape
        h, dk = self.n_heads, self.head_dim

        def heads(t: Tensor) -> Tensor:
            return ad.transpose(ad.reshape(t, (b, l, h, dk)), (0, 2, 1, 3))

        q = heads(ad.matmul(x, self.wq) + self.bq)
        k = heads(ad.matmul(x, self.wk) + self.bk)
        v = heads(ad.matmul(x, self.wv) + self.bv)
        scores = ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))) * (1.0 / math.sqrt(dk))
        att = ad.softmax(scores + attn_bias, axis=-1)
        ctx = ad.reshape(ad.transpose(ad.matmul(att, v), (0, 2, 1, 3)), (b, l, d))
        x = ad.layer_norm(x + ad.matmul(ctx, self.wo) + self.bo, self.ln1_g, self.ln1_b)
        ff = ad.matmul(ad.gelu(ad.matmul(x, self.w1) + self.b1), self.w2) + self.b2
        return ad.layer_norm(x + ff, self.ln2_g, self.ln2_b)


class Encoder:
    def __init__(self, cfg: EncoderConfig, bank: _ParamBank):
        self.cfg = cfg
        self.tok_emb = bank.normal("encoder.tok_emb", (cfg.vocab_size, cfg.model_dim))
        self.pos_emb = bank.normal("encoder.pos_emb", (cfg.max_len, cfg.model_dim))
        self.ln_emb_g = bank.ones("encoder.ln_emb.gain", (cfg.model_dim,))
        self.ln_emb_b = bank.zeros("encoder.ln_emb.bias", (cfg.model_dim,))
        self.layers = [_EncoderLayer(bank, cfg, i) for i in range(cfg.n_layers)]
        self.dtype = bank.dtype

    def __call__(self, ids: np.ndarray, mask: np.ndarray) -> HiddenSequence:
        if ids.ndim != 2 or ids.shape[1] != self.cfg.max_len:
            raise ShapeError(f"ids must be (B, {self.cfg.max_len}), got {ids.shape}")
        if mask.shape != ids.shape:
            raise ShapeError(f"mask shape {mask.shape} != ids shape {ids.shape}")
        mask = mask.astype(self.dtype)
        x = ad.embedding_lookup(self.tok_emb, ids) + self.pos_emb
        x = ad.layer_norm(x, self.ln_emb_g, self.ln_emb_b)
        bias = Tensor(((1.0 - mask) * ATTN_MASK_BIAS)[:, None, None, :].astype(self.dtype))
        for layer in self.layers:
            x = layer(x, bias)
        return HiddenSequence(x, mask)


class Generator:
    def __init__(self, cfg: GeneratorConfig, enc_cfg: EncoderConfig, bank: _ParamBank):
        self.cfg = cfg
        self.max_len = enc_cfg.max_len
        self.model_dim = enc_cfg.model_dim
        out = self.max_len * self.model_dim
        self.w1 = bank.normal("generator.w1", (cfg.noise_dim, cfg.hidden_dim))
        self.b1 = bank.zeros("generator.b1", (cfg.hidden_dim,))
        self.w2 = bank.normal("generator.w2", (cfg.hidden_dim, out))
        self.b2 = bank.zeros("generator.b2", (out,))
        self.dtype = bank.dtype

    def __call__(self, z: np.ndarray | Tensor) -> HiddenSequence:
        if not isinstance(z, Tensor):
            z = Tensor(np.asarray(z, dtype=self.dtype))
        if z.data.ndim != 2 or z.data.shape[1] != self.cfg.noise_dim:
            raise ShapeError(f"noise must be (B, {self.cfg.noise_dim}), got {z.shape}")
        h = ad.gelu(ad.matmul(z, self.w1) + self.b1)
        flat = ad.matmul(h, self.w2) + self.b2
        out = ad.reshape(flat, (z.data.shape[0], self.max_len, self.model_dim))
        mask = np.ones((z.data.shape[0], self.max_len), dtype=self.dtype)
        return HiddenSequence(out, mask)


class Discriminator:
    def __init__(self, cfg: DiscriminatorConfig, enc_cfg: EncoderConfig, bank: _ParamBank):
        d, dh = enc_cfg.model_dim, cfg.hidden_dim
        self.ws = bank.normal("discriminator.shared.w", (d, dh))
        self.bs = bank.zeros("discriminator.shared.b", (dh,))
        self.wt = bank.normal("discriminator.token.w", (dh, 2))
        self.bt = bank.zeros("discriminator.token.b", (2,))
        self.wr = bank.normal("discriminator.realfake.w", (dh, 1))
        self.br = bank.zeros("discriminator.realfake.b", (1,))

    def __call__(self, hs: HiddenSequence) -> DiscriminatorOutput:
        shared = ad.gelu(ad.matmul(hs.hidden, self.ws) + self.bs)
        token_logits = ad.matmul(shared, self.wt) + self.bt
        pooled = ad.mean_pool(shared, hs.mask)
        logit = ad.reshape(ad.matmul(pooled, self.wr) + self.br, (pooled.shape[0],))
        return DiscriminatorOutput(token_logits, ad.sigmoid(logit), pooled)


class AdversarialTagger:
    """Container wiring the encoder, generator and discriminator together.

    All parameters are drawn from a single seeded rng in construction order,
    so the same seed always yields identical initial weights.
    """

    def __init__(
        self,
        enc_cfg: EncoderConfig,
        gen_cfg: GeneratorConfig = GeneratorConfig(),
        disc_cfg: DiscriminatorConfig = DiscriminatorConfig(),
        seed: int = 0,
        dtype=np.float32,
    ):
        self.enc_cfg = enc_cfg
        self.gen_cfg = gen_cfg
        self.disc_cfg = disc_cfg
        self.dtype = np.dtype(dtype).type
        rng = np.random.default_rng(seed)
        bank = _ParamBank(rng, self.dtype)
        self.encoder = Encoder(enc_cfg, bank)
        n_enc = len(bank.params)
        self.generator = Generator(gen_cfg, enc_cfg, bank)
        n_gen = len(bank.params) - n_enc
        self.discriminator = Discriminator(disc_cfg, enc_cfg, bank)
        self._params = bank.params
        self._enc_slice = slice(0, n_enc)
        self._gen_slice = slice(n_enc, n_enc + n_gen)
        self._disc_slice = slice(n_enc + n_gen, len(bank.params))

    # -- forward passes

    def encode(self, ids: np.ndarray, mask: np.ndarray) -> HiddenSequence:
        return self.encoder(ids, mask)

    def generate(self, z: np.ndarray | Tensor) -> HiddenSequence:
        return self.generator(z)

    def discriminate(self, hs: HiddenSequence) -> DiscriminatorOutput:
        return self.discriminator(hs)

    # -- parameter groups

    def parameters(self) -> list[Parameter]:
        return list(self._params)

    def d_parameters(self) -> list[Parameter]:
        """Everything the discriminator update touches: encoder + heads."""
        return self._params[self._enc_slice] + self._params[self._disc_slice]

    def g_parameters(self) -> list[Parameter]:
        return self._params[self._gen_slice]

    def named_parameters(self) -> dict[str, Parameter]:
        return {p.name: p for p in self._params}

    def n_parameters(self) -> int:
        return sum(p.data.size for p in self._params)

    # -- persistence

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {p.name: p.data for p in self._params}

    def load_state_arrays(self, named: dict[str, np.ndarray]) -> None:
        own = self.named_parameters()
        missing = own.keys() - named.keys()
        extra = named.keys() - own.keys()
        if missing or extra:
            raise ShapeError(f"parameter set mismatch: missing={missing}, extra={extra}")
        for name, p in own.items():
            arr = named[name]
            if arr.shape != p.data.shape:
                raise ShapeError(f"{name}: shape {arr.shape} != {p.data.shape}")
            p.data[...] = arr.astype(self.dtype)

    def config_dict(self) -> dict:
        return {
            "encoder": asdict(self.enc_cfg),
            "generator": asdict(self.gen_cfg),
            "discriminator": asdict(self.disc_cfg),
        }

    @classmethod
    def from_config_dict(cls, cfg: dict, seed: int = 0, dtype=np.float32) -> "AdversarialTagger":
        return cls(
            EncoderConfig(**cfg["encoder"]),
            GeneratorConfig(**cfg["generator"]),
            DiscriminatorConfig(**cfg["discriminator"]),
            seed=seed,
            dtype=dtype,
        )
