# -*- coding: utf-8 -*-
"""Central finite differences to cross-check autograd gradients."""
import torch

DEFAULT_STEP = 1e-4


def finite_difference_gradient(fn, tensor, step=DEFAULT_STEP):
    """Central difference gradient of the scalar `fn()` w.r.t. every entry of `tensor`.

    `tensor` is modified in place during the evaluation and restored afterwards,
    so it may be a parameter that `fn` reads implicitly.
    """
    grad = torch.zeros_like(tensor)
    flat = tensor.data.view(-1)
    flat_grad = grad.view(-1)
    with torch.no_grad():
        for i in range(flat.numel()):
            original = flat[i].item()
            flat[i] = original + step
            plus = float(fn())
            flat[i] = original - step
            minus = float(fn())
            flat[i] = original
            flat_grad[i] = (plus - minus)/(2*step)
    return grad


def analytic_gradients(fn, tensors):
    """Autograd gradients of the scalar `fn()` w.r.t. `tensors` (zeros where unused)."""
    for tensor in tensors:
        tensor.grad = None
    value = fn()
    grads = torch.autograd.grad(value, tensors, allow_unused=True)
    return [torch.zeros_like(t) if g is None else g.detach() for t, g in zip(tensors, grads)]


def max_relative_error(analytic, numeric, floor=1e-12):
    """max_i |a_i - n_i| / max_i max(|a_i|, |n_i|), entries of all tensors pooled."""
    analytic = torch.cat([a.reshape(-1) for a in analytic])
    numeric = torch.cat([n.reshape(-1) for n in numeric])
    scale = max(analytic.abs().max().item(), numeric.abs().max().item(), floor)
    return (analytic - numeric).abs().max().item()/scale


def gradient_check(fn, tensors, step=DEFAULT_STEP):
    """Relative error between autograd and finite difference gradients of `fn()`.

    Parameters:
    * fn: callable returning a scalar tensor, should run in double precision
    * tensors: list of leaf tensors with requires_grad=True

    Returns:
    * float, see max_relative_error
    """
    tensors = list(tensors)
    analytic = analytic_gradients(fn, tensors)
    numeric = [finite_difference_gradient(fn, t, step) for t in tensors]
    return max_relative_error(analytic, numeric)
