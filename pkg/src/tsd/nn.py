"""Parameterized layers and activation functions."""

from __future__ import annotations

import math

import numpy as np
from scipy.special import erf, expit

from .errors import ContractError, DimensionError
from .tensor import Tensor, as_tensor, concat, matmul, pad_axis

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


# activations -----------------------------------------------------------------

def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    out = expit(x.data)
    return Tensor._make(out, (x,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def gelu(x) -> Tensor:
    """Exact GELU, x * Phi(x) with Phi computed from erf."""
    x = as_tensor(x)
    cdf = 0.5 * (1.0 + erf(x.data / _SQRT2))
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * x.data * x.data)
    return Tensor._make(x.data * cdf, (x,), lambda g: (g * (cdf + x.data * pdf),), "gelu")


def softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return Tensor._make(out, (x,), backward, "softmax")


def log_softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    probs = np.exp(out)

    def backward(g):
        return (g - probs * g.sum(axis=axis, keepdims=True),)

    return Tensor._make(out, (x,), backward, "log_softmax")


def layer_norm_fn(x, gain, offset, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then scale and shift."""
    x, gain, offset = as_tensor(x), as_tensor(gain), as_tensor(offset)
    d = x.shape[-1]
    if gain.shape != (d,) or offset.shape != (d,):
        raise DimensionError(f"layer_norm: feature width {d} does not match gain {gain.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    out = xhat * gain.data + offset.data

    def backward(g):
        gx_hat = g * gain.data
        gx = inv * (
            gx_hat
            - gx_hat.mean(axis=-1, keepdims=True)
            - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True)
        )
        lead = tuple(range(g.ndim - 1))
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return Tensor._make(out, (x, gain, offset), backward, "layer_norm")


# modules ------------------------------------------------------------------------

class Module:
    """Container that discovers parameters and sub-modules from its attributes."""

    def named_parameters(self, prefix: str = "") -> list[tuple[str, Tensor]]:
        out = []
        for name, value in vars(self).items():
            key = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                out.append((key, value))
            elif isinstance(value, Module):
                out.extend(value.named_parameters(key + "."))
            elif isinstance(value, dict):
                for k, v in value.items():
                    if isinstance(v, Module):
                        out.extend(v.named_parameters(f"{key}.{k}."))
                    elif isinstance(v, Tensor) and v.requires_grad:
                        out.append((f"{key}.{k}", v))
        return out

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None


def _uniform(rng: np.random.Generator, fan_in: int, shape) -> Tensor:
    bound = math.sqrt(1.0 / fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator):
        self.weight = _uniform(rng, d_in, (d_in, d_out))
        self.bias = Tensor(np.zeros(d_out), requires_grad=True)

    @property
    def d_in(self) -> int:
        return self.weight.shape[0]

    def __call__(self, x) -> Tensor:
        x = as_tensor(x)
        if x.ndim < 2 or x.shape[-1] != self.d_in:
            raise DimensionError(f"linear: input {x.shape} does not end in d_in={self.d_in}")
        y = matmul(x, self.weight)
        return y + self.bias.expand(y.shape)


class LayerNorm(Module):
    def __init__(self, d: int, eps: float = 1e-5):
        if eps <= 0:
            raise ContractError("layer norm epsilon must be positive")
        self.gain = Tensor(np.ones(d), requires_grad=True)
        self.offset = Tensor(np.zeros(d), requires_grad=True)
        self.eps = eps

    def __call__(self, x) -> Tensor:
        return layer_norm_fn(x, self.gain, self.offset, self.eps)


class TemporalConv(Module):
    """Same-length 1-D convolution over time with symmetric zero padding.

    Input is ``(..., T, d_in)``; the kernel has shape ``(k, d_in, d_out)``
    and tap ``j`` multiplies the frame at offset ``j - (k - 1) / 2``.
    """

    def __init__(self, d_in: int, d_out: int, width: int, rng: np.random.Generator):
        if width < 1 or width % 2 == 0:
            raise ContractError(f"kernel width must be odd and positive, got {width}")
        self.kernel = _uniform(rng, width * d_in, (width, d_in, d_out))
        self.bias = Tensor(np.zeros(d_out), requires_grad=True)

    @property
    def width(self) -> int:
        return self.kernel.shape[0]

    def __call__(self, x) -> Tensor:
        x = as_tensor(x)
        k, d_in, d_out = self.kernel.shape
        if x.ndim < 2 or x.shape[-1] != d_in:
            raise DimensionError(f"temporal conv: input {x.shape} does not end in d_in={d_in}")
        T = x.shape[-2]
        if T < 1:
            raise ContractError("temporal conv needs at least one time step")
        half = (k - 1) // 2
        if k == 1:
            frames = x
        else:
            padded = pad_axis(x, -2, half, half)
            lead = (slice(None),) * (x.ndim - 2)
            frames = concat([padded[lead + (slice(j, j + T), slice(None))] for j in range(k)], axis=-1)
        y = matmul(frames, self.kernel.reshape(k * d_in, d_out))
        return y + self.bias.expand(y.shape)


class MultiHeadAttention(Module):
    """Scaled dot-product attention over ``heads`` heads with an output projection.

    Inputs are ``(B, T, d)``; 2-D inputs are treated as a batch of one.
    The attention weights of the last call are kept in ``last_weights`` with
    shape ``(B, heads, T_q, T_c)``.
    """

    def __init__(self, d: int, heads: int, rng: np.random.Generator):
        if heads < 1 or d % heads:
            raise ContractError(f"model width {d} is not divisible by {heads} heads")
        self.heads = heads
        self.q = Linear(d, d, rng)
        self.k = Linear(d, d, rng)
        self.v = Linear(d, d, rng)
        self.out = Linear(d, d, rng)
        self.last_weights: np.ndarray | None = None

    @property
    def d_k(self) -> int:
        return self.q.weight.shape[1] // self.heads

    def _split_heads(self, x: Tensor) -> Tensor:
        B, T, d = x.shape
        return x.reshape(B, T, self.heads, d // self.heads).transpose(0, 2, 1, 3)

    def __call__(self, query, context) -> Tensor:
        query, context = as_tensor(query), as_tensor(context)
        squeeze = query.ndim == 2
        if squeeze:
            query, context = query.reshape((1,) + query.shape), context.reshape((1,) + context.shape)
        d = self.q.d_in
        if query.shape[-1] != d or context.shape[-1] != d:
            raise DimensionError(f"attention: widths of {query.shape} and {context.shape} must equal {d}")
        if query.shape[0] != context.shape[0]:
            raise DimensionError(f"attention: batch of {query.shape} and {context.shape} differ")
        if context.shape[1] == 0:
            raise ContractError("attention over an empty context")
        B, Tq, _ = query.shape
        q = self._split_heads(self.q(query))
        k = self._split_heads(self.k(context))
        v = self._split_heads(self.v(context))
        scores = matmul(q, k.swap_last()) * (1.0 / math.sqrt(self.d_k))
        weights = softmax(scores, axis=-1)
        self.last_weights = weights.data
        mixed = matmul(weights, v).transpose(0, 2, 1, 3).reshape(B, Tq, d)
        out = self.out(mixed)
        return out.reshape(out.shape[1:]) if squeeze else out
