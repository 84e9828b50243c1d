"""Gradient-check battery: backward rules vs central finite differences.

Everything runs in float64 on toy shapes; the finite-difference probe is
the independent oracle for every network primitive used by the models.
"""

import numpy as np

from . import autodiff as ad
from . import rng
from .models import InpaintNet, InpaintNetConfig, convlstm_cell_step, inpaint_forward


def _rand(shape, seed, scale=1.0):
    return ad.Tensor(scale * rng.generator(seed, "gc", *shape)
                     .standard_normal(shape), requires_grad=True)


def gradcheck_battery():
    """(name, GradCheckReport) for the primitive and composite ops."""
    checks = []

    checks.append(("linear", ad.grad_check(
        lambda x, w, b: ad.linear(x, w, b),
        [_rand((3, 4), 1), _rand((2, 4), 2), _rand((2,), 3)],
        tolerance=1e-6)))

    checks.append(("conv2d", ad.grad_check(
        lambda x, w, b: ad.conv(x, w, b, stride=1, padding=1),
        [_rand((2, 2, 5, 5), 4), _rand((3, 2, 3, 3), 5), _rand((3,), 6)],
        tolerance=1e-5)))

    checks.append(("conv3d-dilated", ad.grad_check(
        lambda x, w: ad.conv(x, w, padding=(1, 2, 2), dilation=(1, 2, 2)),
        [_rand((1, 2, 3, 7, 7), 7), _rand((2, 2, 3, 3, 3), 8)],
        tolerance=1e-5)))

    checks.append(("group_norm", ad.grad_check(
        lambda x, g, b: ad.group_norm(x, 2, g, b),
        [_rand((2, 4, 6), 9), _rand((4,), 10), _rand((4,), 11)],
        tolerance=1e-5)))

    checks.append(("silu", ad.grad_check(
        lambda x: ad.silu(x), [_rand((4, 5), 12)], tolerance=1e-5)))

    checks.append(("gelu", ad.grad_check(
        lambda x: ad.gelu(x), [_rand((4, 5), 13)], tolerance=1e-5)))

    checks.append(("group_norm+silu", ad.grad_check(
        lambda x, g, b: ad.silu(ad.group_norm(x, 2, g, b)),
        [_rand((2, 4, 6), 14), _rand((4,), 15), _rand((4,), 16)],
        tolerance=1e-5)))

    def convlstm3(x, w, b):
        h = ad.Tensor(np.zeros((1, 2, 3, 3)))
        c = ad.Tensor(np.zeros((1, 2, 3, 3)))
        for _ in range(3):
            h, c = convlstm_cell_step(x, h, c, w, b, 2)
        return h

    checks.append(("convlstm-3step", ad.grad_check(
        convlstm3,
        [_rand((1, 1, 3, 3), 17), _rand((8, 3, 3, 3), 18, 0.3),
         _rand((8,), 19, 0.1)],
        tolerance=1e-5)))

    net = InpaintNet(InpaintNetConfig(channels=4, blocks=2, groups=2,
                                      dropout=0.0), seed=20,
                     dtype=np.float64)
    miss = np.zeros((2, 4, 4), dtype=bool)
    miss[:, ::2, ::2] = True
    x0 = _rand((1, 3, 2, 4, 4), 21)
    checks.append(("inpaintnet-input", ad.grad_check(
        lambda x: inpaint_forward(net, x, miss), [x0], tolerance=1e-5)))

    x_fixed = x0.detach()
    w = net.params["block0.conv1.w"]

    def net_by_weight(weight):
        net.params["block0.conv1.w"] = weight
        return inpaint_forward(net, x_fixed, miss)

    checks.append(("inpaintnet-weight", ad.grad_check(
        net_by_weight, [w], tolerance=1e-5)))
    return checks
