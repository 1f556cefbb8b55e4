"""Small hand-computed cases for the numeric building blocks."""

import math

import numpy as np
import pytest
from scipy.stats import norm

from gradsuite import random_bundle
from tsd.encoders import SUBSPACE_KEYS, SubspaceBundle, SupervisorNet, TriSubspaceEncoder, pool
from tsd.errors import ContractError
from tsd.gradcheck import finite_diff_check
from tsd.losses import (
    LossWeights,
    common_consistency,
    hsic,
    orthogonality,
    pairwise_collab,
    private_disparity,
    supervisor_loss,
    supervisor_targets,
    task_loss,
    total_loss,
    tri_subspace_loss,
)
from tsd.nn import LayerNorm, Linear, MultiHeadAttention, TemporalConv, gelu, sigmoid, softmax
from tsd.saca import Fusion, GatedFusion, SACAFusion, build_context, context_blocks
from tsd.tensor import Tensor, concat, exp, reduce_mean, reduce_sum, square

RNG = np.random.default_rng


# tensors ---------------------------------------------------------------------------

def test_matmul_cases():
    eye = Tensor(np.eye(2))
    assert np.array_equal((eye @ eye).data, np.eye(2))
    assert np.array_equal((Tensor([[1.0, 2], [3, 4]]) @ Tensor([[1.0], [1]])).data, [[3], [7]])
    a = Tensor(RNG(0).standard_normal((3, 4)), requires_grad=True)
    b = RNG(1).standard_normal((4, 2))
    (a @ Tensor(b)).sum().backward()
    assert np.allclose(a.grad, np.ones((3, 2)) @ b.T)


def test_elementwise_and_reductions():
    assert np.array_equal((Tensor([1.0, 2]) + Tensor([3.0, 4])).data, [4, 6])
    assert square(Tensor([-2.0])).data.tolist() == [4.0]
    assert exp(Tensor([0.0])).data.tolist() == [1.0]
    assert reduce_mean(Tensor([[1.0, 3], [5, 7]]), axis=0).data.tolist() == [3, 5]
    assert reduce_sum(Tensor([1.0, 2, 3])).item() == 6
    with pytest.raises(ContractError):
        reduce_mean(Tensor(np.zeros((0, 2))), axis=0)


def test_concat_cases():
    assert concat([Tensor([[1.0]]), Tensor([[2.0]])], axis=0).data.tolist() == [[1], [2]]
    x = RNG(0).standard_normal((2, 3))
    assert np.array_equal(concat([Tensor(x)], axis=1).data, x)
    rep = finite_diff_check(lambda t: square(concat([t[:, :1], t[:, 1:] * 2.0], axis=1)).sum(), Tensor(x))
    assert rep.max_rel_err < 1e-6


def test_backward_cases():
    w = Tensor(RNG(0).standard_normal(5), requires_grad=True)
    w.sum().backward()
    assert np.array_equal(w.grad, np.ones(5))
    w = Tensor([3.0], requires_grad=True)
    square(w).sum().backward()
    assert w.grad.tolist() == [6.0]


def test_finite_difference_reports():
    rep = finite_diff_check(lambda t: square(t).sum(), Tensor([1.0, 2.0]))
    assert np.allclose(rep.analytic, [2, 4]) and rep.max_rel_err < 1e-6
    rep = finite_diff_check(lambda t: t.sum() * 0.0 + 3.0, Tensor([1.0, 2.0]))
    assert not rep.analytic.any() and not rep.numeric.any()
    rep = finite_diff_check(lambda t: exp(t).sum(), Tensor([0.0]))
    assert rep.analytic[0] == pytest.approx(1.0) and rep.max_rel_err < 1e-4


# layers --------------------------------------------------------------------------

def test_linear_cases():
    lin = Linear(2, 2, RNG(0))
    lin.weight.data[...] = np.eye(2)
    x = RNG(1).standard_normal((3, 2))
    assert np.array_equal(lin(Tensor(x)).data, x)
    lin = Linear(2, 1, RNG(0))
    lin.weight.data[...] = [[1.0], [2.0]]
    lin.bias.data[...] = [3.0]
    assert lin(Tensor([[1.0, 1.0]])).data.tolist() == [[6.0]]


def test_gelu_cases():
    assert gelu(Tensor([0.0])).item() == 0.0
    assert abs(gelu(Tensor([10.0])).item() - 10) < 1e-6
    assert gelu(Tensor([1.0])).item() == pytest.approx(norm.cdf(1.0), abs=1e-15)


def test_sigmoid_cases():
    assert sigmoid(Tensor([0.0])).item() == 0.5
    x = RNG(0).standard_normal(6)
    assert np.allclose(sigmoid(Tensor(x)).data + sigmoid(Tensor(-x)).data, 1.0)
    with np.errstate(over="raise"):
        v = sigmoid(Tensor([-50.0, 50.0])).data
    assert np.all((v >= 0) & (v <= 1))


def test_layernorm_cases():
    ln = LayerNorm(3)
    assert not ln(Tensor([[2.0, 2.0, 2.0]])).data.any()
    ln2 = LayerNorm(2)
    assert np.allclose(ln2(Tensor([[-1.0, 1.0]])).data, np.array([[-1, 1]]) / math.sqrt(1 + 1e-5))


def test_softmax_cases():
    assert np.allclose(softmax(Tensor(np.full(9, 0.3))).data, 1 / 9)
    assert np.allclose(softmax(Tensor([0.0, math.log(3)])).data, [0.25, 0.75])
    x = RNG(0).standard_normal(5)
    assert np.allclose(softmax(Tensor(x)).data, softmax(Tensor(x + 7.5)).data)


def test_conv_cases():
    conv = TemporalConv(3, 3, 1, RNG(0))
    conv.kernel.data[...] = np.eye(3)[None]
    x = RNG(1).standard_normal((2, 4, 3))
    assert np.allclose(conv(Tensor(x)).data, x)
    avg = TemporalConv(1, 1, 3, RNG(0))
    avg.kernel.data[...] = 1 / 3
    out = avg(Tensor(np.array([[1.0], [2.0], [3.0]]))).data.ravel()
    assert np.allclose(out, [1, 2, 5 / 3])


def test_attention_cases():
    rng = RNG(0)
    att = MultiHeadAttention(4, 2, rng)
    q, c = rng.standard_normal((1, 3, 4)), rng.standard_normal((1, 1, 4))
    expected = att.out(att.v(Tensor(c))).data
    assert np.allclose(att(Tensor(q), Tensor(c)).data, np.repeat(expected, 3, axis=1))
    same = np.tile(rng.standard_normal(4), (1, 5, 1))
    att(Tensor(q), Tensor(same))
    assert np.allclose(att.last_weights, 1 / 5)
    one = MultiHeadAttention(1, 1, rng)
    for lin in (one.q, one.k):
        lin.weight.data[...] = 1.0
        lin.bias.data[...] = 0.0
    one(Tensor([[1.0]]), Tensor([[0.0], [math.log(4)]]))
    assert np.allclose(one.last_weights.ravel(), [0.2, 0.8])


# encoders --------------------------------------------------------------------------

def _encoder(d=4):
    return TriSubspaceEncoder({"l": d, "v": d, "a": d}, d, d, d, 1, RNG(0))


def test_modality_and_projection_identity():
    enc = _encoder()
    for m in "lva":
        enc.conv[m].kernel.data[...] = np.eye(4)[None]
        enc.proj[m].weight.data[...] = np.eye(4)
    x = RNG(1).standard_normal((2, 5, 4))
    h = enc.encode_modality(Tensor(x), "v")
    assert np.allclose(h.data, x)
    assert np.allclose(enc.project(h, "v").data, x)
    z = enc.unified({m: Tensor(x) for m in "lva"})
    assert {t.shape[-1] for t in z.values()} == {4}


def test_modality_kernel_receives_gradient():
    enc = TriSubspaceEncoder({"l": 3, "v": 2, "a": 2}, 5, 4, 4, 3, RNG(0))
    out = enc.encode_modality(Tensor(RNG(1).standard_normal((2, 6, 3))), "l")
    assert out.shape == (2, 6, 5)
    out.sum().backward()
    assert np.abs(enc.conv["l"].kernel.grad).max() > 0


def test_common_encoder_is_shared_and_normalized():
    enc = _encoder()
    z = Tensor(RNG(1).standard_normal((2, 3, 4)))
    assert np.array_equal(enc.encode_common(z).data, enc.encode_common(z).data)
    assert np.abs(enc.encode_common(z).data.mean(axis=-1)).max() < 1e-10


def test_subshared_and_private_cases():
    enc = _encoder()
    z = Tensor(RNG(1).standard_normal((2, 3, 4)))
    s_m, s_n, cat = enc.encode_subshared(z, z, ("l", "a"))
    assert np.array_equal(s_m.data, s_n.data) and cat.shape[1] == 6
    zero = Tensor(np.zeros((1, 2, 4)))
    for m in "lva":
        enc.private_fc[m].bias.data[...] = 0.0
    assert np.allclose(enc.encode_private(zero, "l").data, 0.5)
    assert not np.allclose(enc.encode_private(z, "l").data, enc.encode_private(z, "v").data)


def test_pool_cases():
    v = RNG(0).standard_normal(3)
    assert np.allclose(pool(Tensor(np.tile(v, (1, 4, 1)))).data, v[None])
    assert pool(Tensor([[[1.0], [3.0]]])).data.tolist() == [[2.0]]
    x = RNG(1).standard_normal((2, 5, 3))
    assert np.allclose(pool(Tensor(x)).data, pool(Tensor(x[:, ::-1])).data)


def test_supervisor_rows():
    net = SupervisorNet(4, 3, RNG(0))
    p = net(Tensor(RNG(1).standard_normal((9, 4)))).data
    assert np.abs(p.sum(axis=1) - 1).max() < 1e-12


# losses -----------------------------------------------------------------------------

def _pooled(**over):
    base = {k: Tensor(np.zeros((1, 2))) for k in ("c_l", "c_v", "c_a")}
    base.update({k: Tensor(np.full((1, 1), 0.5)) for k in ("s_lv_l", "s_lv_v", "s_la_l", "s_la_a", "s_va_v", "s_va_a")})
    base.update({k: Tensor(np.asarray(v, float).reshape(1, -1)) for k, v in over.items()})
    return base


def test_common_consistency_cases():
    assert common_consistency(_pooled(c_l=[1, 0])).item() == pytest.approx(2 / 3)
    assert common_consistency(_pooled(c_v=[1, 0])).item() == pytest.approx(2 / 3)
    assert common_consistency(_pooled(c_l=[1, 1], c_v=[1, 1], c_a=[1, 1])).item() == 0.0


def test_pairwise_collab_cases():
    assert pairwise_collab(_pooled()).item() == 0.0
    assert pairwise_collab(_pooled(s_la_l=[0.8], s_la_a=[0.2])).item() == pytest.approx(0.12)


def _hsic_brute(x, y):
    n = len(x)
    u = np.eye(n) - np.ones((n, n)) / n
    return np.trace(u @ (x @ x.T) @ u @ (y @ y.T)) / (n - 1) ** 2


def test_hsic_cases():
    x = RNG(0).standard_normal((6, 3))
    assert abs(hsic(Tensor(x), Tensor(np.tile([1.0, 2.0], (6, 1)))).item()) < 1e-12
    p = Tensor([[1.0], [-1.0]])
    assert hsic(p, p).item() == pytest.approx(4.0) == _hsic_brute(p.data, p.data)
    for seed in range(10):
        a, b = RNG(seed).standard_normal((5, 2)), RNG(seed + 50).standard_normal((5, 3))
        assert hsic(Tensor(a), Tensor(b)).item() == pytest.approx(_hsic_brute(a, b), rel=1e-10)
        assert _hsic_brute(a, b) >= -1e-10


def test_private_disparity_cases():
    normalized = []
    for seed in range(20):
        rng = RNG(seed)
        p = {m: rng.standard_normal((256, 4)) for m in "lva"}
        pairs = [("l", "v"), ("l", "a"), ("v", "a")]
        vals = [hsic(Tensor(p[i]), Tensor(p[j])).item()
                / math.sqrt(hsic(Tensor(p[i]), Tensor(p[i])).item() * hsic(Tensor(p[j]), Tensor(p[j])).item())
                for i, j in pairs]
        normalized.append(np.mean(vals))
    assert max(normalized) < 0.05
    same = RNG(0).standard_normal((8, 3))
    pooled = {f"p_{m}": Tensor(same) for m in "lva"}
    assert private_disparity(pooled).item() == pytest.approx(hsic(Tensor(same), Tensor(same)).item())
    assert private_disparity(pooled).item() > 0


def test_orthogonality_cases():
    def bundle(c, p):
        T = c.shape[1]
        z = lambda: Tensor(np.zeros((1, T, c.shape[2])))  # noqa: E731
        common = {m: Tensor(c) for m in "lva"}
        private = {m: Tensor(p) for m in "lva"}
        directional = {f"s_{q}_{m}": z() for q in ("lv", "la", "va") for m in q}
        return SubspaceBundle(common, directional, private)

    c = np.zeros((1, 4, 2))
    p = np.zeros((1, 4, 2))
    c[0, :2] = RNG(0).standard_normal((2, 2))
    p[0, 2:] = RNG(1).standard_normal((2, 2))
    assert orthogonality(bundle(c, p)).item() == 0.0
    assert orthogonality(bundle(np.full((1, 1, 1), 2.0), np.full((1, 1, 1), 3.0))).item() == 36.0
    b = random_bundle(RNG(2))
    b3 = random_bundle(RNG(2), scale=3.0)
    assert orthogonality(b3).item() == pytest.approx(81 * orthogonality(b).item())


class _FixedNet:
    """Stands in for the supervisor: fixed probabilities per row."""

    def __init__(self, probs):
        self.probs = probs

    def __call__(self, rows):
        return Tensor(self.probs)


def test_supervisor_loss_cases():
    B = 2
    pooled = {k: Tensor(np.zeros((B, 3))) for k in _pooled()} | {f"p_{m}": Tensor(np.zeros((B, 3))) for m in "lva"}
    onehot = np.eye(3)[supervisor_targets(B)]
    assert supervisor_loss(pooled, _FixedNet(onehot)).item() == 0.0
    soft = np.full((12 * B, 3), 0.2) + 0.4 * onehot
    worse = supervisor_loss(pooled, _FixedNet(soft)).item()
    soft[0] = [0.7, 0.15, 0.15]
    assert supervisor_loss(pooled, _FixedNet(soft)).item() < worse


def test_task_and_total_cases():
    assert task_loss(Tensor([1.5, -2.0]), np.array([1.5, -2.0]), "regression").item() == 0.0
    assert task_loss(Tensor([0.0]), np.array([2.0]), "regression").item() == 4.0
    assert task_loss(Tensor(np.zeros((3, 20))), np.array([0, 5, 19]), "classification").item() == pytest.approx(math.log(20))
    assert total_loss(0.0, 0.0).item() == 0.0
    assert total_loss(1.5, 0.25).item() == 1.75


def test_tri_subspace_cases():
    parts = dict(zip(("l_com", "l_pair", "l_pri", "l_ort", "l_sup"), (1.0, 2.0, 3.0, 4.0, 5.0)))
    assert tri_subspace_loss(parts, LossWeights(0, 0, 0, 0)).item() == 1.0
    assert tri_subspace_loss(parts, LossWeights(1, 1, 1, 1)).item() == 15.0
    from tsd.config import AblationConfig
    w, use_common = AblationConfig(drop_loss=("ort",)).effective_weights(LossWeights(1, 1, 1, 1))
    assert tri_subspace_loss(parts, w, use_common).item() == 11.0


# fusion -------------------------------------------------------------------------------

def test_refine_single_token_and_shapes():
    rng = RNG(0)
    saca = SACAFusion(4, 2, rng)
    members = random_bundle(rng, (1, 1, 1), d=4).members()
    refined = saca.refine(members)
    for k in SUBSPACE_KEYS:
        assert refined[k].shape == members[k].shape
    x = members["c_l"]
    kind = "common"
    h = saca.refine_ln[kind](x)
    att = saca.refine_att[kind]
    assert np.allclose(refined["c_l"].data, att.out(att.v(h)).data)


def test_context_cases():
    rng = RNG(0)
    refined = random_bundle(rng, (2, 3, 4), d=4).members()
    assert build_context(refined, "s_lv").shape[1] == (2 + 3) + 2 + 3 + 2 + 3
    assert "s_lv" in context_blocks("c_l") and "s_la" in context_blocks("c_l") and "s_va" not in context_blocks("c_l")
    assert len(context_blocks("p_a")) == 4


def test_cross_attention_cases():
    rng = RNG(0)
    saca = SACAFusion(4, 2, rng)
    target = Tensor(rng.standard_normal((2, 3, 4)))
    att = saca.cross_att["private"]
    att.out.weight.data[...] = 0.0
    att.out.bias.data[...] = 0.0
    assert np.allclose(saca.cross_attend(target, target, "private").data, saca.cross_ln["private"](target).data)
    ctx = Tensor(rng.standard_normal((2, 11, 4)))
    assert saca.cross_attend(target, ctx, "common").shape == (2, 3, 4)
    assert np.allclose(saca.cross_att["common"].last_weights.sum(axis=-1), 1.0)


def test_gate_cases():
    rng = RNG(0)
    gate = GatedFusion(3, rng)
    v = rng.standard_normal((2, 3))
    psi, y = gate([Tensor(v)] * 9)
    assert np.allclose(psi.data, 1 / 9) and np.allclose(y.data, v)
    gate.scorer.weight.data[...] = [[1.0], [0.0], [0.0]]
    gate.scorer.bias.data[...] = 0.0
    vecs = [np.concatenate([np.zeros((2, 1)), rng.standard_normal((2, 2))], axis=1) for _ in range(9)]
    vecs[4][:, 0] = 50.0
    psi, y = gate([Tensor(x) for x in vecs])
    assert np.abs(y.data - vecs[4]).max() < 1e-6
    psi, _ = gate([Tensor(rng.standard_normal((5, 3))) for _ in range(9)])
    assert np.abs(psi.data.sum(axis=1) - 1).max() < 1e-12


def test_head_and_variant_cases():
    rng = RNG(0)
    fusion = Fusion(4, 2, "regression", 0, "saca", rng)
    fusion.head.fc2.weight.data[...] = 0.0
    out = fusion.fuse_subspaces(random_bundle(rng, d=4))
    assert out.prediction.shape == (2,) and not out.prediction.data.any()
    seq = Tensor(rng.standard_normal((2, 3, 4)))
    same = SubspaceBundle({m: seq for m in "lva"}, {f"s_{p}_{m}": seq for p in ("lv", "la", "va") for m in p},
                          {m: seq for m in "lva"})
    summed = Fusion(4, 2, "regression", 0, "sum", rng).fuse_subspaces(same)
    assert np.allclose(summed.y_final.data, 9 * pool(seq).data)
    cat = Fusion(4, 2, "regression", 0, "concat", rng)
    assert cat.concat_proj.weight.shape[0] == 9 * 4
    for variant in ("saca", "sum", "concat"):
        pred = Fusion(4, 2, "regression", 0, variant, rng).fuse_subspaces(random_bundle(rng, d=4)).prediction
        assert np.all(np.isfinite(pred.data))
