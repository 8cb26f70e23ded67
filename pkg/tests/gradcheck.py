"""Finite-difference gradient oracle, independent of the tape machinery.

Central differences with eps=1e-3 at float64. The relative error metric is
max |analytic - numeric| / (|numeric| + 1e-8), required < 1e-4.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from steprobe.tensor import Tape, Tensor, backward

EPS = 1e-3
TOL = 1e-4


def numeric_grad(f: Callable[[], float], x: np.ndarray, eps: float = EPS) -> np.ndarray:
    """Central-difference gradient of scalar-valued ``f`` w.r.t. ``x`` in place."""
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f()
        flat[i] = orig - eps
        fm = f()
        flat[i] = orig
        gf[i] = (fp - fm) / (2.0 * eps)
    return g


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    if analytic.size == 0:
        return 0.0
    return float(np.max(np.abs(analytic - numeric) / (np.abs(numeric) + 1e-8)))


def check_against_fd(make_loss: Callable[[Sequence[Tensor]], Tensor],
                     arrays: Sequence[np.ndarray],
                     tol: float = TOL) -> float:
    """Compare tape gradients of ``make_loss`` against central differences.

    ``arrays`` are float64 leaf values; every one is treated as requiring
    grad. Returns the worst relative error across all leaves (and asserts it
    is below ``tol``).
    """
    leaves = [Tensor(a, requires_grad=True, dtype=np.float64) for a in arrays]
    with Tape():
        loss = make_loss(leaves)
    backward(loss)

    def f() -> float:
        fresh = [Tensor(t.data, dtype=np.float64) for t in leaves]
        return make_loss(fresh).item()

    worst = 0.0
    for t in leaves:
        fd = numeric_grad(f, t.data)
        err = relative_error(t.grad, fd)
        worst = max(worst, err)
        assert err < tol, f"gradient mismatch: rel err {err:.3e} >= {tol} (leaf shape {t.shape})"
    return worst


def projection_loss(op: Callable[..., Tensor], rng: np.random.Generator):
    """Wrap an op into a scalar loss via a fixed random projection.

    The projection catches Jacobian errors that a plain sum would average
    away (wrong transposes, dropped cross terms).
    """
    proj: dict[tuple[int, ...], np.ndarray] = {}

    def make_loss(leaves: Sequence[Tensor]) -> Tensor:
        from steprobe import ops

        out = op(*leaves)
        r = proj.get(out.shape)
        if r is None:
            r = rng.standard_normal(out.shape)
            proj[out.shape] = r
        return ops.tensor_sum(ops.mul(out, Tensor(r, dtype=np.float64)))

    return make_loss


def op_check_cases(rng: np.random.Generator):
    """One finite-difference case per registered op (plus the composites).

    Returns ``{name: (make_loss, [leaf arrays])}``.
    """
    from steprobe import ops

    def away_from_kink(x: np.ndarray) -> np.ndarray:
        # relu is non-differentiable at 0; central differences with eps=1e-3
        # need inputs at least eps away from the kink
        s = np.sign(x)
        s[s == 0] = 1.0
        return x + 0.25 * s

    cases = {}
    cases["add"] = (projection_loss(ops.add, rng),
                    [rng.standard_normal((3, 4)), rng.standard_normal((3, 4))])
    cases["add_broadcast"] = (projection_loss(ops.add, rng),
                              [rng.standard_normal((2, 3, 4)), rng.standard_normal((4,))])
    cases["mul"] = (projection_loss(ops.mul, rng),
                    [rng.standard_normal((3, 4)), rng.standard_normal((3, 4))])
    cases["scale"] = (projection_loss(lambda x: ops.scale(x, -1.7), rng),
                      [rng.standard_normal((3, 4))])
    cases["tensor_sum"] = (lambda leaves: ops.tensor_sum(leaves[0]),
                           [rng.standard_normal((3, 4))])
    cases["reshape"] = (projection_loss(lambda x: ops.reshape(x, (2, 6)), rng),
                        [rng.standard_normal((3, 4))])
    cases["swap_axes"] = (projection_loss(lambda x: ops.swap_axes(x, -1, -2), rng),
                          [rng.standard_normal((2, 3, 4))])
    cases["broadcast_to"] = (projection_loss(lambda x: ops.broadcast_to(x, (2, 3, 4)), rng),
                             [rng.standard_normal((1, 1, 4))])
    cases["concat"] = (projection_loss(lambda a, b: ops.concat([a, b], axis=0), rng),
                       [rng.standard_normal((2, 3)), rng.standard_normal((4, 3))])
    cases["matmul"] = (projection_loss(ops.matmul, rng),
                       [rng.standard_normal((3, 4)), rng.standard_normal((4, 5))])
    cases["matmul_batched"] = (projection_loss(ops.matmul, rng),
                               [rng.standard_normal((2, 3, 4)), rng.standard_normal((2, 4, 5))])
    cases["matmul_shared_weight"] = (projection_loss(ops.matmul, rng),
                                     [rng.standard_normal((2, 3, 4)), rng.standard_normal((4, 5))])
    cases["linear"] = (projection_loss(ops.linear, rng),
                       [rng.standard_normal((5, 4)), rng.standard_normal((4, 3)),
                        rng.standard_normal(3)])
    cases["linear_1d"] = (projection_loss(ops.linear, rng),
                          [rng.standard_normal(4), rng.standard_normal((4, 3)),
                           rng.standard_normal(3)])
    cases["relu"] = (projection_loss(ops.relu, rng),
                     [away_from_kink(rng.standard_normal((3, 4)))])
    cases["gelu"] = (projection_loss(ops.gelu, rng),
                     [rng.standard_normal((3, 4))])
    cases["softmax"] = (projection_loss(ops.softmax, rng),
                        [rng.standard_normal((3, 5))])
    cases["layer_norm"] = (projection_loss(ops.layer_norm, rng),
                           [rng.standard_normal((4, 6)), rng.standard_normal(6),
                            rng.standard_normal(6)])
    cases["mean_pool"] = (projection_loss(ops.mean_pool, rng),
                          [rng.standard_normal((2, 5, 4))])
    cases["scaled_dot_attention"] = (projection_loss(ops.scaled_dot_attention, rng),
                                     [rng.standard_normal((2, 4, 3)),
                                      rng.standard_normal((2, 4, 3)),
                                      rng.standard_normal((2, 4, 3))])

    labels = rng.integers(0, 5, size=4)
    cases["cross_entropy"] = (lambda leaves: ops.cross_entropy(leaves[0], labels),
                              [rng.standard_normal((4, 5))])
    return cases


def run_all_op_checks(seed: int, tol: float = TOL) -> dict[str, float]:
    """FD-check every op for one seed; returns per-op worst relative error."""
    rng = np.random.default_rng(seed)
    return {
        name: check_against_fd(make_loss, arrays, tol)
        for name, (make_loss, arrays) in op_check_cases(rng).items()
    }


def fd_check_model(model, features, label: int, tol: float = TOL,
                   eps: float | Sequence[float] = EPS) -> float:
    """FD-check every parameter of a probe model against the tape gradients.

    The model must hold float64 parameters. Returns the worst relative error
    over all parameter tensors. ``eps`` may be a single step or a grid; with a
    grid each parameter is scored by its best step, which separates the two
    failure modes of central differences (truncation error at large eps on
    high-curvature paths, round-off at small eps on tiny gradients) from an
    actually wrong backward rule, which fails at every step.
    """
    from steprobe import ops
    from steprobe.probes import forward

    eps_grid = (eps,) if isinstance(eps, float) else tuple(eps)

    with Tape():
        loss = ops.cross_entropy(forward(model, features), label)
    backward(loss)
    analytic = {k: p.grad.copy() for k, p in model.params.items()}
    model.zero_grad()

    def f() -> float:
        return ops.cross_entropy(forward(model, features), label).item()

    worst = 0.0
    for name, p in model.params.items():
        err = min(relative_error(analytic[name], numeric_grad(f, p.data, eps=e))
                  for e in eps_grid)
        worst = max(worst, err)
        assert err < tol, f"parameter {name}: rel err {err:.3e} >= {tol}"
    return worst
