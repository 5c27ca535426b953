"""Attribution maps, the attribution loss, and latent slicing/recovery."""

import numpy as np
import pytest

from semcodec import attribution as A
from semcodec import tensor as T
from semcodec.tensor import Tensor

from helpers import rel_err


def _ce_like(logits, labels):
    from semcodec.layers import cross_entropy_loss

    return cross_entropy_loss(logits, labels)


def test_constant_model_gives_zero_phi():
    # a model that ignores its input leaves no gradient path to z
    z = Tensor(np.random.default_rng(0).normal(size=(2, 3, 4, 4)))
    const = Tensor(np.array([[1.0, 0.0], [1.0, 0.0]]))
    attr = A.attribute(z, lambda probe: const, _ce_like, np.array([0, 1]))
    assert np.all(attr.phi.data == 0.0)
    assert attr.pos_count == 0
    assert attr.m == z.size


def test_linear_positive_model_all_positive():
    rng = np.random.default_rng(1)
    z = Tensor(rng.uniform(0.5, 1.5, size=(12,)))
    w = Tensor(rng.uniform(0.5, 1.5, size=(12,)))
    attr = A.attribute(z, lambda probe: T.tsum(T.mul(probe, w)), lambda out, _: out, None)
    assert attr.pos_count == attr.m == 12
    assert np.all(attr.phi.data > 0)


def test_phi_matches_finite_difference_sensitivity():
    rng = np.random.default_rng(2)
    z = Tensor(rng.normal(size=(2, 8)))
    w = rng.normal(size=(3, 8))
    labels = np.array([0, 2])

    def forward(probe):
        return T.matmul(probe, Tensor(w.T))

    attr = A.attribute(z, forward, _ce_like, labels)

    eps = 1e-6
    fd = np.zeros_like(z.data)
    for pos in np.ndindex(z.shape):
        zp, zm = z.data.copy(), z.data.copy()
        zp[pos] += eps
        zm[pos] -= eps
        lp = _ce_like(forward(Tensor(zp)), labels).data.item()
        lm = _ce_like(forward(Tensor(zm)), labels).data.item()
        fd[pos] = (lp - lm) / (2 * eps)
    assert rel_err(attr.phi.data, fd * z.data) < 1e-4


def test_attribution_map_validates_summaries():
    phi = Tensor(np.ones(4))
    with pytest.raises(ValueError):
        A.AttributionMap(phi=phi, m=5, pos_sum=T.tsum(phi), pos_count=4)
    with pytest.raises(ValueError):
        A.AttributionMap(phi=phi, m=4, pos_sum=T.tsum(phi), pos_count=9)


def test_xai_loss_all_positive_case():
    phi = Tensor(np.full(10, 0.7))
    attr = A.AttributionMap(phi=phi, m=10, pos_sum=T.tsum(T.relu(phi)), pos_count=10)
    got = A.xai_loss(attr, lam=0.5, r=1.0).data.item()
    s = 7.0
    assert got == pytest.approx(0.5 / s + 0.5 - 1.0)


def test_xai_loss_formula_arithmetic():
    # lam=0.5, r=1, M=100, pos_count=50, pos_sum=10 -> 0.05
    phi_data = np.zeros(100)
    phi_data[:50] = 10.0 / 50.0
    phi = Tensor(phi_data)
    attr = A.AttributionMap(phi=phi, m=100, pos_sum=T.tsum(T.relu(phi)), pos_count=50)
    assert A.xai_loss(attr, lam=0.5, r=1.0).data.item() == pytest.approx(0.05)


def test_xai_loss_decreases_with_coverage():
    losses = []
    for pos_count in (20, 40, 80):
        phi_data = np.zeros(100)
        phi_data[:pos_count] = 5.0 / pos_count  # fixed pos_sum = 5
        phi = Tensor(phi_data)
        attr = A.AttributionMap(phi=phi, m=100, pos_sum=T.tsum(T.relu(phi)), pos_count=pos_count)
        losses.append(A.xai_loss(attr).data.item())
    assert losses[0] > losses[1] > losses[2]


def test_xai_loss_degenerate_capped(caplog):
    phi = Tensor(np.full(6, -1.0))
    attr = A.AttributionMap(phi=phi, m=6, pos_sum=T.tsum(T.relu(phi)), pos_count=0)
    with caplog.at_level("WARNING"):
        out = A.xai_loss(attr)
    assert out.data.item() == A.XAI_LOSS_CAP
    assert any("degenerate" in r.message for r in caplog.records)


def test_xai_loss_gradient_through_pos_sum():
    z = Tensor(np.array([1.0, 2.0, -1.0]), requires_grad=True)
    phi = z * Tensor(np.array([1.0, 1.0, 1.0]))
    attr = A.AttributionMap(phi=phi, m=3, pos_sum=T.tsum(T.relu(phi)), pos_count=2)
    T.backward(A.xai_loss(attr, lam=0.5, r=1.0))
    # d/dz of 0.5/pos_sum at pos_sum=3 on the positive entries
    assert np.allclose(z.grad, [-0.5 / 9.0, -0.5 / 9.0, 0.0])


def test_importance_stats_zero_and_alternating():
    zero = A.AttributionMap(phi=Tensor(np.zeros(8)), m=8, pos_sum=Tensor(0.0), pos_count=0)
    assert A.importance_stats(zero) == 0.0
    alt = Tensor(np.array([1.0, -1.0] * 4))
    attr = A.AttributionMap(phi=alt, m=8, pos_sum=T.tsum(T.relu(alt)), pos_count=4)
    assert A.importance_stats(attr) == 0.5


def test_importance_stats_per_channel():
    phi_data = np.zeros((2, 3, 2, 2))
    phi_data[:, 0] = 1.0  # channel 0 all positive
    phi = Tensor(phi_data)
    attr = A.AttributionMap(phi=phi, m=phi.size, pos_sum=T.tsum(T.relu(phi)), pos_count=8)
    per = A.importance_stats(attr, per_channel=True)
    assert np.allclose(per, [1.0, 0.0, 0.0])
    flat = A.AttributionMap(phi=Tensor(np.ones(4)), m=4, pos_sum=Tensor(4.0), pos_count=4)
    with pytest.raises(ValueError):
        A.importance_stats(flat, per_channel=True)


def test_slice_full_ratio_is_identity():
    z = Tensor(np.random.default_rng(3).normal(size=(3, 8, 8)))
    crop, spec = A.slice_latent(z, 1.0)
    assert np.array_equal(crop.data, z.data)
    assert (spec.s_h, spec.s_w, spec.p_h, spec.p_w) == (8, 8, 0, 0)


def test_slice_quarter_ratio_geometry():
    z = Tensor(np.arange(64.0).reshape(1, 8, 8))
    crop, spec = A.slice_latent(z, 0.25)
    assert (spec.s_h, spec.s_w, spec.p_h, spec.p_w) == (4, 4, 2, 2)
    assert np.array_equal(crop.data, z.data[:, 2:6, 2:6])


def test_slice_floor_arithmetic_odd_extent():
    z = Tensor(np.zeros((1, 7, 7)))
    _, spec = A.slice_latent(z, 0.5)
    assert spec.s_h == spec.s_w == 4  # floor(7 * 0.7071)
    assert spec.p_h == spec.p_w == 1


def test_slice_arithmetic_sweep():
    for hw in (4, 8, 16, 33):
        for ratio in np.arange(0.1, 1.01, 0.1):
            spec = A.make_slice_spec(hw, hw, float(ratio))
            assert spec.s_h == int(np.floor(np.sqrt(ratio) * hw))
            assert spec.p_h == (hw - spec.s_h) // 2
            assert spec.s_h * spec.s_w <= ratio * hw * hw + 2 * hw


def test_slice_degenerate_rejected():
    with pytest.raises(ValueError):
        A.make_slice_spec(4, 4, 0.01)
    with pytest.raises(ValueError):
        A.make_slice_spec(8, 8, 0.0)
    with pytest.raises(ValueError):
        A.make_slice_spec(8, 8, 1.2)


def test_recover_interior_bitwise():
    rng = np.random.default_rng(4)
    z = Tensor(rng.normal(size=(2, 8, 8)))
    crop, spec = A.slice_latent(z, 0.5)
    for mode in ("reflection", "zero"):
        full = A.recover_latent(crop, spec, 8, 8, mode=mode)
        assert full.shape == (2, 8, 8)
        interior = full.data[:, spec.p_h : spec.p_h + spec.s_h, spec.p_w : spec.p_w + spec.s_w]
        assert interior.tobytes() == crop.data.tobytes()


def test_recover_zero_mode_zeros_border():
    z = Tensor(np.ones((1, 8, 8)))
    crop, spec = A.slice_latent(z, 0.25)
    full = A.recover_latent(crop, spec, 8, 8, mode="zero").data
    assert full.sum() == crop.data.sum()
    assert full[0, 0, 0] == 0.0


def test_recover_reflection_needs_no_oob_reads():
    # pad larger than crop extent forces iterative reflection
    z = Tensor(np.arange(36.0).reshape(1, 6, 6))
    crop, spec = A.slice_latent(z, 0.1)  # 1x1 crop cannot reflect
    with pytest.raises(ValueError):
        A.recover_latent(crop, spec, 6, 6, mode="reflection")
    crop2, spec2 = A.slice_latent(Tensor(np.arange(100.0).reshape(1, 10, 10)), 0.2)
    full = A.recover_latent(crop2, spec2, 10, 10, mode="reflection")
    assert full.shape == (1, 10, 10)


def test_recover_rejects_bad_geometry():
    spec = A.make_slice_spec(8, 8, 0.5)
    crop = Tensor(np.zeros((1, spec.s_h, spec.s_w)))
    with pytest.raises(ValueError):
        A.recover_latent(crop, spec, 4, 4)
    with pytest.raises(ValueError):
        A.recover_latent(crop, spec, 8, 8, mode="mirror")


def test_integrated_gradients_matches_grad_input_for_linear():
    # for a linear map the path integral equals the endpoint gradient
    rng = np.random.default_rng(5)
    z = Tensor(rng.normal(size=(2, 6)))
    w = Tensor(rng.normal(size=(6, 3)))

    def forward(probe):
        return T.matmul(probe, w)

    labels = np.array([1, 2])
    a = A.attribute(z, forward, _ce_like, labels)
    b = A.attribute_integrated(z, forward, _ce_like, labels, steps=8)
    assert not np.allclose(a.phi.data, b.phi.data)  # softmax is nonlinear
    lin = A.attribute_integrated(z, lambda p: T.matmul(p, w), lambda o, _: T.tsum(o), None, steps=4)
    direct = A.attribute(z, lambda p: T.matmul(p, w), lambda o, _: T.tsum(o), None)
    assert np.allclose(lin.phi.data, direct.phi.data, atol=1e-12)
