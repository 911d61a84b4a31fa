"""Central finite-difference checking helpers shared by the test suite."""

from __future__ import annotations

import numpy as np

from meshlift import diffcore as dc


def numeric_grad(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central differences of scalar f with respect to every element of x."""
    g = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        gf[i] = (fp - fm) / (2.0 * h)
    return g


def check_grads(build, arrays: dict[str, np.ndarray], wrt=None,
                rtol: float = 1e-5, atol: float = 1e-7, h: float = 1e-6) -> None:
    """Assert analytic gradients of a scalar-valued builder match central FD.

    ``build`` receives one dc.Array per entry of ``arrays`` (as keyword
    arguments) and returns a scalar dc.Array. ``wrt`` selects which inputs
    to check (default: all).
    """
    wrt = list(arrays) if wrt is None else list(wrt)
    params = {k: dc.Array(v.copy(), requires_grad=(k in wrt)) for k, v in arrays.items()}
    with dc.Tape() as tape:
        loss = build(**params)
    dc.backward(tape, loss)

    def forward_value() -> float:
        consts = {k: dc.Array(params[k].data) for k in params}
        return build(**consts).item()

    for name in wrt:
        analytic = params[name].grad
        assert analytic is not None, f"no gradient reached input {name!r}"
        fd = numeric_grad(forward_value, params[name].data, h=h)
        np.testing.assert_allclose(analytic, fd, rtol=rtol, atol=atol,
                                   err_msg=f"gradient mismatch for {name!r}")


def random_projection(rng: np.random.Generator, shape) -> np.ndarray:
    """Fixed random weights used to scalarize a multi-output op."""
    return rng.standard_normal(shape)


def scalarize(out: dc.Array, weights: np.ndarray) -> dc.Array:
    """Reduce an Array to a scalar via a fixed linear functional."""
    return dc.ops.total(dc.ops.mul(out, dc.Array(weights)))
