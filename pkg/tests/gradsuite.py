"""Finite-difference gradient checks shared by the acceptance and unit suites.

Each check returns ``(name, max_rel_err)``; callers compare against the
tolerance.  Layers are reduced to scalars through a fixed random projection
so every output coordinate contributes.
"""

from __future__ import annotations

import numpy as np

from tsd.config import ModelConfig
from tsd.data import ModalityBatch
from tsd.encoders import POOLED_KEYS, SupervisorNet, SubspaceBundle, pool_bundle
from tsd.gradcheck import check_parameters, finite_diff_check, rel_err, scaled_floor
from tsd.losses import (
    LossWeights,
    common_consistency,
    hsic,
    orthogonality,
    pairwise_collab,
    private_disparity,
    supervisor_loss,
    task_loss,
    total_loss,
    tri_subspace_loss,
)
from tsd.model import TSDModel
from tsd.nn import LayerNorm, Linear, MultiHeadAttention, TemporalConv, gelu, log_softmax, sigmoid, softmax
from tsd.saca import GatedFusion, PredictionHead, SACAFusion
from tsd.tensor import Tensor, as_tensor

H, TOL = 1e-5, 1e-4
B, D = 2, 8


def _proj(out: Tensor, rng) -> Tensor:
    r = Tensor(rng.standard_normal(out.shape))
    return (out * r).sum()


def _both(name, layer, x, rng, fn=None):
    """Check a layer with respect to its input and to all of its parameters."""
    fn = fn or (lambda t: layer(t))
    r = Tensor(rng.standard_normal(fn(Tensor(x)).shape))
    res = [(f"{name}/input", finite_diff_check(lambda t: (fn(t) * r).sum(), Tensor(x), H, TOL).max_rel_err)]
    xt = Tensor(x)
    rep = check_parameters(lambda: (fn(xt) * r).sum(), layer.parameters(), rng, coords_per_param=3, directions=2)
    res.append((f"{name}/params", rep.max_rel_err))
    return res


def layer_checks(seed: int, lengths=(3, 3, 3)) -> list[tuple[str, float]]:
    rng = np.random.default_rng(seed)
    T = lengths[0]
    x = rng.standard_normal((B, T, D))
    out = []
    for name, act in (("sigmoid", sigmoid), ("gelu", gelu), ("softmax", lambda t: softmax(t, -1)),
                      ("log_softmax", lambda t: log_softmax(t, -1))):
        r = Tensor(rng.standard_normal(x.shape))
        out.append((name, finite_diff_check(lambda t, a=act: (a(t) * r).sum(), Tensor(x), H, TOL).max_rel_err))
    out += _both("linear", Linear(D, 5, rng), x, rng)
    ln = LayerNorm(D)
    ln.gain.data[...] = rng.uniform(0.5, 1.5, D)
    ln.offset.data[...] = rng.standard_normal(D)
    out += _both("layernorm", ln, x, rng)
    out += _both("conv", TemporalConv(D, 6, 3, rng), x, rng)
    att = MultiHeadAttention(D, 2, rng)
    ctx = Tensor(rng.standard_normal((B, sum(lengths), D)))
    out += _both("attention", att, x, rng, fn=lambda t: att(t, ctx))
    r = Tensor(rng.standard_normal((B, D)))
    out.append(("attention/context", finite_diff_check(lambda c: (att(Tensor(x), c) * r.reshape(B, 1, D).expand((B, T, D))).sum(),
                                                       ctx, H, TOL).max_rel_err))
    gate = GatedFusion(D, rng)
    pooled = rng.standard_normal((B, 9, D))
    out += _both("gate", gate, pooled, rng,
                 fn=lambda t: gate([t[:, k, :] for k in range(9)])[1])
    head = PredictionHead(D, "regression", 0, rng)
    out += _both("head", head, x[:, 0, :], rng)
    sup = SupervisorNet(D, 6, rng)
    out += _both("supervisor", sup, x.reshape(-1, D), rng)
    return out


def random_bundle(rng, lengths=(3, 3, 3), d=D, scale=1.0) -> SubspaceBundle:
    T = dict(zip("lva", lengths))
    mk = lambda m: Tensor(scale * rng.standard_normal((B, T[m], d)))  # noqa: E731
    common = {m: mk(m) for m in "lva"}
    directional = {}
    for p in ("lv", "la", "va"):
        for m in p:
            directional[f"s_{p}_{m}"] = mk(m)
    private = {m: mk(m) for m in "lva"}
    return SubspaceBundle(common, directional, private)


FULL_INPUT_LIMIT = 256


def input_check(fn, x: Tensor, rng) -> float:
    """Every coordinate for small inputs; otherwise random coordinates plus directional probes."""
    if x.size <= FULL_INPUT_LIMIT:
        return finite_diff_check(fn, x, H, TOL).max_rel_err
    leaf = Tensor(x.data.copy(), requires_grad=True)
    return check_parameters(lambda: fn(leaf), [leaf], rng, coords_per_param=96, directions=4, h=H, tol=TOL).max_rel_err


def _bundle_fn(lengths, loss):
    """Closure mapping one flat vector to a loss of the bundle it encodes."""
    T = dict(zip("lva", lengths))
    keys = POOLED_KEYS
    shapes = [(B, T[k[-1]], D) for k in keys]
    sizes = [int(np.prod(s)) for s in shapes]

    def fn(flat: Tensor) -> Tensor:
        parts, i = {}, 0
        for k, s, n in zip(keys, shapes, sizes):
            parts[k] = flat[i : i + n].reshape(*s)
            i += n
        common = {m: parts[f"c_{m}"] for m in "lva"}
        directional = {k: parts[k] for k in keys if k.startswith("s_")}
        private = {m: parts[f"p_{m}"] for m in "lva"}
        return loss(SubspaceBundle(common, directional, private))

    return fn, sum(sizes)


def loss_checks(seed: int, lengths=(3, 3, 3)) -> list[tuple[str, float]]:
    rng = np.random.default_rng(seed)
    out = []
    net = SupervisorNet(D, 6, rng)
    named = {
        "l_com": lambda b: common_consistency(pool_bundle(b)),
        "l_pair": lambda b: pairwise_collab(pool_bundle(b)),
        "l_pri": lambda b: private_disparity(pool_bundle(b)),
        "l_ort": orthogonality,
        "l_sup": lambda b: supervisor_loss(pool_bundle(b), net),
    }
    for name, loss in named.items():
        fn, n = _bundle_fn(lengths, loss)
        x = Tensor(rng.standard_normal(n) * 0.5)
        out.append((name, input_check(fn, x, rng)))
    # gradient reversal: analytic gradient of the adversarial loss is minus the cooperative derivative
    fn_coop, n = _bundle_fn(lengths, named["l_sup"])
    fn_adv, _ = _bundle_fn(lengths, lambda b: supervisor_loss(pool_bundle(b), net, adversarial=True))
    x = Tensor(rng.standard_normal(n) * 0.5, requires_grad=True)
    fn_adv(x).backward()
    picks = np.arange(n) if n <= FULL_INPUT_LIMIT else rng.choice(n, 48, replace=False)
    numeric = []
    for i in picks:
        up, down = x.data.copy(), x.data.copy()
        up[i] += H
        down[i] -= H
        numeric.append((fn_coop(Tensor(up)).item() - fn_coop(Tensor(down)).item()) / (2 * H))
    floor = scaled_floor(1e-6, fn_coop(x).item())
    out.append(("l_sup/adversarial", float(rel_err(x.grad[picks], -np.array(numeric), floor).max())))
    # hsic on its own, over both arguments jointly
    n_rows = 5
    x = Tensor(rng.standard_normal(2 * n_rows * 3))
    out.append(("hsic", finite_diff_check(lambda t: hsic(t[: n_rows * 3].reshape(n_rows, 3), t[n_rows * 3 :].reshape(n_rows, 3)),
                                          x, H, TOL).max_rel_err))
    labels = rng.standard_normal(4)
    out.append(("task/regression", finite_diff_check(lambda t: task_loss(t, labels, "regression"),
                                                     Tensor(rng.standard_normal(4)), H, TOL).max_rel_err))
    cls = rng.integers(0, 5, size=4)
    out.append(("task/classification", finite_diff_check(lambda t: task_loss(t, cls, "classification"),
                                                         Tensor(rng.standard_normal((4, 5))), H, TOL).max_rel_err))
    w = LossWeights(*rng.uniform(0.05, 1.0, 4))
    fn = lambda t: total_loss(t[0], tri_subspace_loss(dict(zip(("l_com", "l_pair", "l_pri", "l_ort", "l_sup"),  # noqa: E731
                                                               [t[i] for i in range(1, 6)])), w))
    out.append(("l_all/composition", finite_diff_check(lambda t: fn(t), Tensor(rng.uniform(0.1, 2, 6)), H, TOL).max_rel_err))
    return out


def tiny_model(seed: int, lengths=(3, 3, 3), fusion="saca", **model_kw):
    rng = np.random.default_rng(seed)
    dims = {"l": 5, "v": 4, "a": 3}
    cfg = ModelConfig(d_hidden=6, d_z=D, heads=2, fusion=fusion, **model_kw)
    model = TSDModel(cfg, dims, seed=seed)
    seqs = {m: rng.standard_normal((B, t, dims[m])) for m, t in zip("lva", lengths)}
    batch = ModalityBatch(seqs, rng.standard_normal(B), np.arange(B))
    return model, batch, rng


def model_check(seed: int, lengths=(3, 3, 3)) -> tuple[str, float]:
    """L_all through encoders, regularizers and SACA, against every parameter of the model."""
    model, batch, rng = tiny_model(seed, lengths)
    w = LossWeights()
    rep = check_parameters(lambda: model(batch, w, True, None).losses["l_all"], model.parameters(), rng,
                           coords_per_param=1, directions=4, h=H, tol=TOL)
    return ("model/l_all", rep.max_rel_err)


def saca_input_check(seed: int, lengths=(3, 3, 3)) -> tuple[str, float]:
    """Gradient of the fused output with respect to every subspace member sequence."""
    rng = np.random.default_rng(seed)
    saca = SACAFusion(D, 2, rng)
    fn, n = _bundle_fn(lengths, lambda b: _proj_fixed(saca(b.members())[3], seed))
    return ("saca/members", input_check(fn, Tensor(rng.standard_normal(n)), rng))


def _proj_fixed(y: Tensor, seed: int) -> Tensor:
    r = np.random.default_rng(seed + 1000).standard_normal(y.shape)
    return (y * Tensor(r)).sum()


def all_checks(seed: int, lengths=(3, 3, 3)) -> list[tuple[str, float]]:
    return [*layer_checks(seed, lengths), *loss_checks(seed, lengths), saca_input_check(seed, lengths),
            model_check(seed, lengths)]


__all__ = ["all_checks", "layer_checks", "loss_checks", "model_check", "random_bundle", "tiny_model", "as_tensor"]
