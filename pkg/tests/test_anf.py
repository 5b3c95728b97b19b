import time

import pytest
import torch

from yuvc.anf import (AnfCoder, AnfConfig, CondNet, ConditioningSignal,
                      quantize)


def test_config_presets_match_published_widths():
    intra = AnfConfig.intra()
    assert (intra.n, intra.m, intra.k, intra.l) == (128, 192, 320, 192)
    assert not intra.conditional
    inter = AnfConfig.inter()
    assert (inter.n, inter.m, inter.k, inter.l) == (128, 192, 128, 128)
    assert inter.conditional


def test_config_validation():
    with pytest.raises(ValueError):
        AnfConfig(n=0, m=8, k=8, l=8, conditional=False)
    with pytest.raises(ValueError):
        AnfConfig(n=8, m=8, k=8, l=8, conditional=False, n_steps=3)


def test_quantize_modes():
    v = torch.tensor([0.2, 0.6, -1.4])
    mean = torch.tensor([0.1, 0.1, 0.1])
    assert torch.equal(quantize(v, mean, "eval"), torch.round(v - mean))
    noisy = quantize(v, mean, "noise")
    assert ((noisy - (v - mean)).abs() <= 0.5).all()
    v.requires_grad_(True)
    out = quantize(v, mean, "ste")
    assert torch.equal(out, torch.round(v.detach() - mean))
    out.sum().backward()
    assert torch.equal(v.grad, torch.ones(3))  # straight-through
    with pytest.raises(ValueError):
        quantize(v, mode="banana")


def test_condnet_resolutions():
    net = CondNet(in_channels=6, width=16)
    sig = net(torch.rand(2, 6, 32, 32))
    assert sig.full_res.shape == (2, 16, 32, 32)
    assert sig.latent_res.shape == (2, 16, 4, 4)


def test_unconditional_rejects_condition_and_vice_versa():
    intra = AnfCoder(AnfConfig.intra_tiny())
    inter = AnfCoder(AnfConfig.inter_tiny())
    x = torch.rand(1, 6, 32, 32)
    cond = inter.condition(torch.rand(1, 6, 32, 32))
    with pytest.raises(ValueError):
        intra.encode(x, cond)
    with pytest.raises(ValueError):
        inter.encode(x, None)


def test_invertibility_100_draws_under_1e5():
    # quantization disabled; fresh random weights and inputs every draw
    start = time.time()
    worst = 0.0
    for i in range(50):
        torch.manual_seed(i)
        coder = AnfCoder(AnfConfig.intra_tiny())
        x = torch.rand(1, 6, 32, 32)
        err = (coder.flow_roundtrip(x) - x).abs().max().item()
        worst = max(worst, err)
    for i in range(50):
        torch.manual_seed(1000 + i)
        coder = AnfCoder(AnfConfig.inter_tiny())
        x = torch.rand(1, 6, 32, 32)
        cond = coder.condition(torch.rand(1, 6, 32, 32))
        err = (coder.flow_roundtrip(x, cond) - x).abs().max().item()
        worst = max(worst, err)
    assert worst <= 1e-5, worst
    assert time.time() - start < 60


def test_zero_weight_coupling_is_analytic_identity():
    torch.manual_seed(0)
    coder = AnfCoder(AnfConfig.intra_tiny())
    with torch.no_grad():
        for p in coder.parameters():
            p.zero_()
    x = torch.rand(1, 6, 32, 32)
    res = coder.encode(x, mode="eval")
    # with all-zero transforms nothing is subtracted: x2 == x, latents == 0
    assert torch.equal(res.x2, x)
    assert torch.count_nonzero(res.z_hat) == 0
    assert torch.count_nonzero(res.h_hat) == 0
    # decode replaces x2 with zeros, adds zero means back: flat zero output
    assert torch.count_nonzero(coder.decode(res.z_hat, res.h_hat)) == 0


def test_encoder_decoder_share_arithmetic():
    torch.manual_seed(3)
    coder = AnfCoder(AnfConfig.intra_tiny())
    x = torch.rand(1, 6, 32, 32)
    res = coder.encode(x, mode="eval")
    dec = coder.decode(res.z_hat, res.h_hat)
    assert torch.equal(res.x_hat, dec)


def test_conditional_encoder_decoder_share_arithmetic():
    torch.manual_seed(4)
    coder = AnfCoder(AnfConfig.inter_tiny())
    x = torch.rand(1, 6, 32, 32)
    cond = coder.condition(torch.rand(1, 6, 32, 32))
    res = coder.encode(x, cond, mode="eval")
    dec = coder.decode(res.z_hat, res.h_hat, cond)
    assert torch.equal(res.x_hat, dec)


def test_latent_shapes_and_strides():
    coder = AnfCoder(AnfConfig.intra_tiny())
    x = torch.rand(1, 6, 64, 32)
    res = coder.encode(x, mode="eval")
    cfg = coder.cfg
    assert res.z_hat.shape == (1, cfg.k, 8, 4)
    assert res.h_hat.shape == (1, cfg.l, 2, 1)
    assert res.means.shape == res.z_hat.shape
    assert res.scales.shape == res.z_hat.shape
    assert (res.scales > 0).all()


def test_train_mode_bits_are_differentiable():
    torch.manual_seed(5)
    coder = AnfCoder(AnfConfig.intra_tiny())
    x = torch.rand(2, 6, 32, 32)
    res = coder.encode(x, mode="train")
    assert res.bits.shape == (2,)
    loss = res.bits.sum() + ((res.x_hat - x) ** 2).sum()
    loss.backward()
    grads = [p.grad for p in coder.parameters() if p.grad is not None]
    assert grads and any(g.abs().sum() > 0 for g in grads)


def test_mod_identity_reproduces_base_output():
    torch.manual_seed(6)
    coder = AnfCoder(AnfConfig.intra_tiny())
    x = torch.rand(1, 6, 32, 32)
    ident = [(torch.ones(c), torch.zeros(c)) for c in coder.mod_layout()]
    a = coder.encode(x, mode="eval")
    b = coder.encode(x, mode="eval", mods=ident)
    assert torch.equal(a.x_hat, b.x_hat)
    assert torch.equal(a.z_hat, b.z_hat)
