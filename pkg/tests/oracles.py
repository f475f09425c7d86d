"""Independent reference computations shared by the unit and acceptance tests."""
import numpy as np
import torch


def _samples(fn, flat, i, h):
    old = flat[i].item()
    f = {}
    for k in (-2, -1, 1, 2):
        flat[i] = old + k * h
        f[k] = fn().item()
    flat[i] = old
    return f


def _derivative(f, h):
    """4th-order central difference from samples at -2h..2h."""
    return (f[-2] - 8 * f[-1] + 8 * f[1] - f[2]) / (12 * h)


def _smooth_derivative(fn, flat, i, f0, h, smooth_tol, kink_tol):
    """Finite-difference derivative, or None when the stencils see a kink."""
    f = _samples(fn, flat, i, h)
    estimates = [_derivative(f, h)] + [_derivative(_samples(fn, flat, i, h / k), h / k) for k in (2, 4)]
    scale = max(max(abs(e) for e in estimates), 1e-7)
    if max(estimates) - min(estimates) > smooth_tol * scale + 1e-11:
        return None
    if abs(f[1] - 2 * f0 + f[-1]) > kink_tol * abs(f[1] - f[-1]) + 1e-15:
        return None
    return estimates[-1]


def central_difference_check(fn, params, n_probe=12, h=1e-4, seed=0, smooth_tol=1e-6, kink_tol=1e-3,
                             max_skip_fraction=0.5):
    """Worst relative error between autograd and finite differences on sampled entries.

    ReLU networks are only piecewise smooth, and a finite difference is only an
    oracle where the stencil sees one linear piece. A probe is rejected when
    stencils halving in width from ``h`` to ``h/4`` disagree (a kink inside the stencil) or
    when the second difference is large against the first (a kink at the
    centre, where autograd takes relu'(0) = 0). Rejected probes are retried at
    ``h/10`` and otherwise redrawn. Raises if too many are skipped.
    """
    loss = fn()
    f0 = loss.item()
    grads = torch.autograd.grad(loss, params)
    rng = np.random.default_rng(seed)
    worst = 0.0
    scored = skipped = 0
    for p, g in zip(params, grads):
        flat = p.data.view(-1)
        gflat = g.reshape(-1)
        want = min(n_probe, flat.numel())
        got = 0
        for i in rng.permutation(flat.numel()):
            if got == want:
                break
            num = _smooth_derivative(fn, flat, i, f0, h, smooth_tol, kink_tol)
            if num is None:
                num = _smooth_derivative(fn, flat, i, f0, h / 10, smooth_tol, kink_tol)
            if num is None:
                skipped += 1
                continue
            ana = gflat[i].item()
            worst = max(worst, abs(num - ana) / max(abs(num), abs(ana), 1e-7))
            got += 1
        scored += got
    if skipped > max_skip_fraction * (scored + skipped):
        raise AssertionError(f"{skipped} of {scored + skipped} probes straddled a kink")
    return worst


def jitter_biases(module, scale=0.1, seed=0):
    """Move zero-initialised biases off zero so dead regions do not sit exactly on a ReLU kink."""
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for name, p in module.named_parameters():
            if name.endswith("bias"):
                p.add_((torch.rand(p.shape, generator=gen, dtype=p.dtype) * 2 - 1) * scale)
