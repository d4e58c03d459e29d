"""Shared fixtures and the finite-difference gradient oracle."""

import numpy as np
import pytest


def finite_difference(loss_fn, tensors, h=1e-3):
    """Central-difference gradients of a scalar loss w.r.t. each tensor.

    ``loss_fn`` must rebuild the computation from the live tensor objects and
    return a python float. Entries are perturbed in place.
    """
    grads = []
    for t in tensors:
        flat = t.data.reshape(-1)
        g = np.zeros(flat.size, dtype=np.float64)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            lp = loss_fn()
            flat[i] = orig - h
            lm = loss_fn()
            flat[i] = orig
            g[i] = (lp - lm) / (2.0 * h)
        grads.append(g.reshape(t.data.shape))
    return grads


def assert_grads_match(build_loss, tensors, rtol=1e-4, atol=1e-6, h=1e-3):
    """Backprop through build_loss() and compare against finite differences."""
    for t in tensors:
        t.grad = None
    loss = build_loss()
    loss.backward()
    numeric = finite_difference(lambda: float(build_loss().data), tensors, h=h)
    for t, num in zip(tensors, numeric):
        assert t.grad is not None, "tensor received no gradient"
        ad = np.asarray(t.grad, dtype=np.float64)
        err = np.abs(ad - num)
        tol = atol + rtol * np.maximum(np.abs(ad), np.abs(num))
        worst = np.unravel_index(np.argmax(err - tol), err.shape)
        assert (err <= tol).all(), (
            f"gradient mismatch at {worst}: autodiff {ad[worst]:.6g} "
            f"vs finite-diff {num[worst]:.6g}"
        )


@pytest.fixture
def nprng():
    return np.random.default_rng(1234)
