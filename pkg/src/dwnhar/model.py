"""Differentiable weightless network: LUT layers with learnable input mapping.

Conventions shared by every module:

* A LUT of arity n reads pins 0..n-1; its address is ``sum(pin_j << j)``, so
  pin 0 is the least significant bit. ``entry_weights[l, u]`` is the entry at
  address u.
* A LUT outputs 1 iff its addressed entry weight is strictly positive.
* Each pin chooses its source among a candidate pool of input bits; the hard
  source is the argmax of the pin's mapping logits (ties to the lowest index).
* Final-layer LUTs are split into K contiguous groups of G = L // K; class c
  scores ``tau * popcount(group c) / G``. When K does not divide L, the last
  ``L - K*G`` LUTs belong to no group and never reach the head.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels

MIN_ARITY, MAX_ARITY = 2, 8


@dataclass
class LutLayer:
    entry_weights: np.ndarray   # [L, 2**n] float64
    mapping_logits: np.ndarray  # [L, n, P] float64
    pools: np.ndarray           # [L, n, P] int64, candidate input-bit indices
    input_width: int

    def __post_init__(self):
        self.entry_weights = np.asarray(self.entry_weights, dtype=np.float64)
        self.mapping_logits = np.asarray(self.mapping_logits, dtype=np.float64)
        self.pools = np.asarray(self.pools, dtype=np.int64)
        L, n, P = self.mapping_logits.shape
        if not MIN_ARITY <= n <= MAX_ARITY:
            raise ValueError(f"LUT arity must be in [{MIN_ARITY}, {MAX_ARITY}], got {n}")
        if self.entry_weights.shape != (L, 1 << n):
            raise ValueError(f"entry_weights shape {self.entry_weights.shape} != {(L, 1 << n)}")
        if self.pools.shape != (L, n, P):
            raise ValueError(f"pools shape {self.pools.shape} != mapping logits {(L, n, P)}")
        if self.pools.size and (self.pools.min() < 0 or self.pools.max() >= self.input_width):
            raise ValueError(f"candidate index outside layer input width {self.input_width}")
        if not np.all(np.isfinite(self.entry_weights)):
            raise ValueError("entry weights must be finite")

    @property
    def num_luts(self) -> int:
        return self.entry_weights.shape[0]

    @property
    def arity(self) -> int:
        return self.mapping_logits.shape[1]

    @property
    def pool_size(self) -> int:
        return self.mapping_logits.shape[2]

    def sources(self) -> np.ndarray:
        """Hard routing ``[L, n]``: the argmax candidate of every pin."""
        best = np.argmax(self.mapping_logits, axis=-1)
        return np.take_along_axis(self.pools, best[..., None], axis=-1)[..., 0]

    def mapping_softmax(self) -> np.ndarray:
        z = self.mapping_logits - self.mapping_logits.max(axis=-1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=-1, keepdims=True)


@dataclass
class DwnModel:
    layers: list
    num_classes: int
    tau: float
    encoder: object = None   # ThermometerEncoder, carried for freezing
    timesteps: int = 0

    def __post_init__(self):
        if not self.layers:
            raise ValueError("model needs at least one LUT layer")
        for prev, cur in zip(self.layers, self.layers[1:]):
            if cur.input_width != prev.num_luts:
                raise ValueError(
                    f"layer input width {cur.input_width} != previous layer size {prev.num_luts}"
                )
        if self.num_classes < 1 or self.layers[-1].num_luts < self.num_classes:
            raise ValueError(
                f"final layer size {self.layers[-1].num_luts} is smaller than "
                f"{self.num_classes} classes"
            )
        if self.encoder is not None and self.timesteps:
            if self.encoder.input_width(self.timesteps) != self.input_width:
                raise ValueError("encoder output width does not match the first layer")

    @property
    def input_width(self) -> int:
        return self.layers[0].input_width

    @property
    def group_size(self) -> int:
        return self.layers[-1].num_luts // self.num_classes

    def parameters(self) -> list:
        """Trainable tensors in a fixed order (entries, logits per layer)."""
        out = []
        for layer in self.layers:
            out += [layer.entry_weights, layer.mapping_logits]
        return out

    def copy(self) -> "DwnModel":
        layers = [
            LutLayer(l.entry_weights.copy(), l.mapping_logits.copy(), l.pools.copy(), l.input_width)
            for l in self.layers
        ]
        return DwnModel(layers, self.num_classes, self.tau, self.encoder, self.timesteps)


@dataclass(frozen=True)
class ModelConfig:
    layer_sizes: tuple = (2000,)
    arity: int = 4
    pool_size: int = 256
    tau: float = 1 / 0.03
    num_classes: int = 6


def init_model(config: ModelConfig, input_width: int, rng, encoder=None, timesteps=0) -> DwnModel:
    """Random model: entries ~ U(-1, 1), logits ~ U(-0.01, 0.01), pools sampled without replacement."""
    rng = np.random.default_rng(rng)
    layers = []
    width = input_width
    for size in config.layer_sizes:
        pool = width if config.pool_size <= 0 else config.pool_size
        if pool > width:
            raise ValueError(f"pool_size {pool} exceeds layer input width {width}")
        n = config.arity
        if not MIN_ARITY <= n <= MAX_ARITY:
            raise ValueError(f"LUT arity must be in [{MIN_ARITY}, {MAX_ARITY}], got {n}")
        entries = rng.uniform(-1.0, 1.0, size=(size, 1 << n))
        logits = rng.uniform(-0.01, 0.01, size=(size, n, pool))
        if pool == width:
            pools = np.argsort(rng.random((size * n, width)), axis=1)
        else:
            pools = np.stack([rng.choice(width, size=pool, replace=False) for _ in range(size * n)])
        layers.append(LutLayer(entries, logits, pools.reshape(size, n, pool), width))
        width = size
    return DwnModel(layers, config.num_classes, config.tau, encoder, timesteps)


def address_bits(address: int, arity: int) -> np.ndarray:
    return np.array([(address >> j) & 1 for j in range(arity)], dtype=np.uint8)


def bits_address(bits) -> int:
    return int(sum(int(b) << j for j, b in enumerate(bits)))


@dataclass
class LayerTrace:
    inputs: np.ndarray     # [B, W] uint8 layer input bits
    sources: np.ndarray    # [L, n] chosen source per pin
    pin_bits: np.ndarray   # [B, L, n] uint8
    addresses: np.ndarray  # [B, L] int64
    outputs: np.ndarray    # [B, L] uint8


@dataclass
class ForwardTrace:
    layers: list = field(default_factory=list)
    single: bool = False


@dataclass
class Gradients:
    entry_weights: list
    mapping_logits: list
    inputs: np.ndarray | None = None  # loss gradient wrt the model's input bits

    def as_list(self) -> list:
        out = []
        for e, m in zip(self.entry_weights, self.mapping_logits):
            out += [e, m]
        return out


def _head(model: DwnModel, final_outputs) -> np.ndarray:
    b = final_outputs.shape[0]
    k, g = model.num_classes, model.group_size
    counts = final_outputs[:, :k * g].reshape(b, k, g).sum(axis=-1)
    return model.tau * counts / model.group_size


def _head_grad(model: DwnModel, up) -> np.ndarray:
    """Every LUT of group c receives upstream_c * tau / G; ungrouped LUTs get 0."""
    g = np.zeros((up.shape[0], model.layers[-1].num_luts))
    k, size = model.num_classes, model.group_size
    g[:, :k * size] = np.repeat(up * (model.tau / size), size, axis=1)
    return g


def forward_hard(model: DwnModel, bits):
    """Hard forward pass. ``bits`` is ``[W]`` or ``[B, W]``; returns (scores, trace)."""
    x = np.asarray(bits)
    single = x.ndim == 1
    x = np.atleast_2d(x).astype(np.uint8, copy=False)
    if x.shape[1] != model.input_width:
        raise ValueError(f"input has {x.shape[1]} bits, model expects {model.input_width}")
    trace = ForwardTrace(single=single)
    shifts = None
    for layer in model.layers:
        src = layer.sources()
        pins = x[:, src]
        if shifts is None or shifts.size != layer.arity:
            shifts = np.arange(layer.arity, dtype=np.int64)
        addr = (pins.astype(np.int64) << shifts).sum(axis=-1)
        lut_idx = np.arange(layer.num_luts)
        out = (layer.entry_weights[lut_idx, addr] > 0).astype(np.uint8)
        trace.layers.append(LayerTrace(x, src, pins, addr, out))
        x = out
    scores = _head(model, x)
    return (scores[0] if single else scores), trace


def efd_neighbourhood(arity: int, radius: int = 0, decay: float = 1.0) -> np.ndarray:
    """Matrix M[a, u] = decay**ham(a, u) if ham(a, u) <= radius else 0."""
    u = np.arange(1 << arity)
    x = u[:, None] ^ u[None, :]
    ham = np.zeros_like(x)
    for j in range(arity):
        ham += (x >> j) & 1
    return np.where(ham <= radius, float(decay) ** ham, 0.0)


def backward_efd(model: DwnModel, trace: ForwardTrace, upstream, radius: int = 0,
                 decay: float = 1.0, input_grad: bool = False) -> Gradients:
    """Extended finite-difference backward pass, summed over the batch.

    ``upstream`` is the loss gradient wrt class scores, ``[K]`` or ``[B, K]``.
    """
    up = np.atleast_2d(np.asarray(upstream, dtype=np.float64))
    if len(trace.layers) != len(model.layers):
        raise ValueError("trace and model have different layer counts")
    batch = trace.layers[0].inputs.shape[0]
    if up.shape != (batch, model.num_classes):
        raise ValueError(f"upstream shape {up.shape} != {(batch, model.num_classes)}")
    g_out = _head_grad(model, up)

    entry_grads, logit_grads = [None] * len(model.layers), [None] * len(model.layers)
    g_in = None
    for li in range(len(model.layers) - 1, -1, -1):
        layer, lt = model.layers[li], trace.layers[li]
        L, n, P = layer.mapping_logits.shape
        if lt.addresses.shape != (batch, L) or lt.inputs.shape[1] != layer.input_width:
            raise ValueError(f"trace does not match layer {li}")
        size = 1 << n
        flat = (np.arange(L)[None, :] * size + lt.addresses).ravel()
        per_addr = np.bincount(flat, weights=g_out.ravel(), minlength=L * size).reshape(L, size)
        if radius == 0:
            entry_grads[li] = per_addr
        else:
            entry_grads[li] = per_addr @ efd_neighbourhood(n, radius, decay)

        # finite difference over one-bit flips of the address, using real entries
        bit = np.int64(1) << np.arange(n, dtype=np.int64)
        a = lt.addresses[..., None]
        lut_idx = np.arange(L)[None, :, None]
        w = layer.entry_weights
        dpin = w[lut_idx, a | bit] - w[lut_idx, a & ~bit]    # [B, L, n]
        g_pin = g_out[..., None] * dpin

        s = layer.mapping_softmax().reshape(L * n, P)
        pools = layer.pools.reshape(L * n, P)
        gp = g_pin.reshape(batch, L * n)
        x_t = np.ascontiguousarray(lt.inputs.T)
        logit_grads[li] = _kernels.mapping_logit_grad(
            x_t, pools, s, np.ascontiguousarray(gp.T)
        ).reshape(L, n, P)
        if li > 0 or input_grad:
            g_in = _kernels.scatter_input_grad(pools, s, np.ascontiguousarray(gp), layer.input_width)
        g_out = g_in
    return Gradients(entry_grads, logit_grads, g_in if input_grad else None)


# -- differentiable oracle ---------------------------------------------------

def _squash(w, mode):
    if mode == "logistic":
        return 1.0 / (1.0 + np.exp(-4.0 * w))
    if mode == "identity":
        return w
    if mode == "step":
        return (w > 0).astype(np.float64)
    raise ValueError(f"unknown squash mode {mode!r}")


def _squash_grad(w, mode):
    if mode == "logistic":
        s = 1.0 / (1.0 + np.exp(-4.0 * w))
        return 4.0 * s * (1.0 - s)
    if mode == "identity":
        return np.ones_like(w)
    raise ValueError(f"squash mode {mode!r} has no gradient")


def _address_table(n):
    u = np.arange(1 << n)
    return ((u[:, None] >> np.arange(n)[None, :]) & 1).astype(bool)  # [2**n, n]


@dataclass
class SoftCache:
    layers: list
    squash: str
    single: bool


def soft_forward(model: DwnModel, soft_bits, squash: str = "logistic"):
    """Exact expectation of the LUT network under independent Bernoulli pins.

    Pin value is the softmax-weighted mix of its candidates; a LUT outputs
    ``sum_u P(u) * squash(w_u)`` over all 2**n addresses. ``squash`` is
    ``"logistic"`` (``1/(1+exp(-4w))``, unit slope at 0), ``"identity"`` or
    ``"step"``. Returns (scores, cache).
    """
    x = np.asarray(soft_bits, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != model.input_width:
        raise ValueError(f"input has {x.shape[1]} values, model expects {model.input_width}")
    if np.any(x < 0) or np.any(x > 1) or not np.all(np.isfinite(x)):
        raise ValueError("soft bits must lie in [0, 1]")
    caches = []
    for layer in model.layers:
        n = layer.arity
        s = layer.mapping_softmax()
        cand = x[:, layer.pools]                            # [B, L, n, P]
        p = np.einsum("lnp,blnp->bln", s, cand)
        table = _address_table(n)
        factors = np.where(table[None, None], p[:, :, None, :], 1.0 - p[:, :, None, :])
        probs = factors.prod(axis=-1)                       # [B, L, 2**n]
        sq = _squash(layer.entry_weights, squash)
        out = np.einsum("blu,lu->bl", probs, sq)
        caches.append((x, s, cand, p, factors, probs, sq))
        x = out
    scores = _head(model, x)
    return (scores[0] if single else scores), SoftCache(caches, squash, single)


def soft_backward(model: DwnModel, cache: SoftCache, upstream) -> Gradients:
    """Exact reverse-mode gradients of ``soft_forward``, summed over the batch."""
    up = np.atleast_2d(np.asarray(upstream, dtype=np.float64))
    g_out = _head_grad(model, up)
    entries, logits = [None] * len(model.layers), [None] * len(model.layers)
    for li in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[li]
        x, s, cand, p, factors, probs, sq = cache.layers[li]
        n = layer.arity
        table = _address_table(n)
        entries[li] = np.einsum("bl,blu->lu", g_out, probs) * _squash_grad(
            layer.entry_weights, cache.squash
        )
        g_p = np.empty_like(p)
        sign = np.where(table, 1.0, -1.0)                  # d factor_j / d p_j
        for j in range(n):
            others = np.delete(factors, j, axis=-1).prod(axis=-1)   # [B, L, 2**n]
            g_p[..., j] = np.einsum("bl,blu,lu,u->bl", g_out, others, sq, sign[:, j])
        # p_j = sum_c s_c x_c  ->  dp/dlogit_c = s_c (x_c - p_j)
        logits[li] = np.einsum("bln,lnp,blnp->lnp", g_p, s, cand - p[..., None])
        g_x = np.zeros_like(x)
        contrib = g_p[..., None] * s[None]                  # [B, L, n, P]
        for b in range(x.shape[0]):
            np.add.at(g_x[b], layer.pools.ravel(), contrib[b].ravel())
        g_out = g_x
    return Gradients(entries, logits, g_out)


# -- checkpoints -------------------------------------------------------------

def save_checkpoint(model: DwnModel, path) -> None:
    """Full trainable state (real entries, logits, pools) as an ``.npz`` archive."""
    arrays = {
        "num_classes": np.int64(model.num_classes),
        "tau": np.float64(model.tau),
        "timesteps": np.int64(model.timesteps),
        "num_layers": np.int64(len(model.layers)),
    }
    if model.encoder is not None:
        arrays["thresholds"] = np.asarray(model.encoder.thresholds)
    for i, layer in enumerate(model.layers):
        arrays[f"entries_{i}"] = layer.entry_weights
        arrays[f"logits_{i}"] = layer.mapping_logits
        arrays[f"pools_{i}"] = layer.pools
        arrays[f"width_{i}"] = np.int64(layer.input_width)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path) -> DwnModel:
    from .encoding import ThermometerEncoder

    with np.load(path) as z:
        layers = [
            LutLayer(z[f"entries_{i}"], z[f"logits_{i}"], z[f"pools_{i}"], int(z[f"width_{i}"]))
            for i in range(int(z["num_layers"]))
        ]
        encoder = ThermometerEncoder(z["thresholds"]) if "thresholds" in z.files else None
        return DwnModel(layers, int(z["num_classes"]), float(z["tau"]), encoder,
                        int(z["timesteps"]))
