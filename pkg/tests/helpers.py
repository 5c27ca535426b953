"""Shared oracles for the test suite: finite differences and loop convolution."""

import numpy as np

from semcodec import tensor as T
from semcodec.tensor import Tensor


def finite_diff(fn, x, step=1e-5):
    """Central-difference gradient of scalar fn w.r.t. the array x."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + step
        hi = fn(x)
        flat[i] = keep - step
        lo = fn(x)
        flat[i] = keep
        gflat[i] = (hi - lo) / (2 * step)
    return grad


def rel_err(a, b):
    denom = max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-8)
    return float(np.max(np.abs(a - b)) / denom)


def check_grad(build, arrays, tol=1e-4, step=1e-5):
    """build(*tensors) -> scalar Tensor; compares autodiff vs central differences.

    Returns the worst relative error across all inputs.
    """
    tensors = [Tensor(np.asarray(a, dtype=np.float64).copy(), requires_grad=True)
               for a in arrays]
    loss = build(*tensors)
    T.backward(loss)
    worst = 0.0
    for i, t in enumerate(tensors):
        def scalar_fn(x, i=i):
            args = [Tensor(t2.data) for t2 in tensors]
            args[i] = Tensor(np.asarray(x, dtype=np.float64))
            return float(build(*args).data)
        num = finite_diff(scalar_fn, t.data, step=step)
        worst = max(worst, rel_err(t.grad, num))
    assert worst < tol, f"gradient mismatch: relative error {worst:.3e} >= {tol}"
    return worst


def conv2d_loops(x, k, bias=None, stride=1, pad=0):
    """Direct 6-nested-loop convolution oracle, [N,Ci,H,W] x [Co,Ci,kh,kw]."""
    x = np.asarray(x, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    squeeze = x.ndim == 3
    if squeeze:
        x = x[None]
    n, ci, h, w = x.shape
    co, ci2, kh, kw = k.shape
    assert ci == ci2
    xp = np.zeros((n, ci, h + 2 * pad, w + 2 * pad))
    xp[:, :, pad:pad + h, pad:pad + w] = x
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (w + 2 * pad - kw) // stride + 1
    out = np.zeros((n, co, oh, ow))
    for b in range(n):
        for o in range(co):
            for i in range(oh):
                for j in range(ow):
                    acc = 0.0
                    for c in range(ci):
                        for u in range(kh):
                            for v in range(kw):
                                acc += xp[b, c, i * stride + u, j * stride + v] * k[o, c, u, v]
                    out[b, o, i, j] = acc
            if bias is not None:
                out[b, o] += bias[o]
    return out[0] if squeeze else out
