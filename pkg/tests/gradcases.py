"""Per-op gradient-check cases shared by the unit and acceptance suites."""

from pitlab import autodiff as ad

# name -> (fn over tensors returning a scalar, input shapes)
OPS = {
    "add": (lambda a, b: ad.sum_(ad.add(a, b) * ad.add(a, b)), [(3, 4), (3, 4)]),
    "sub": (lambda a, b: ad.sum_(ad.sub(a, b) ** 2), [(3, 4), (3, 4)]),
    "mul": (lambda a, b: ad.sum_(ad.mul(a, b)), [(3, 4), (3, 4)]),
    "div": (lambda a, b: ad.sum_(ad.div(a, ad.add(ad.mul(b, b), 1.0))), [(3,), (3,)]),
    "scalar_broadcast": (lambda a, s: ad.sum_(ad.mul(a, s) ** 2), [(2, 3), ()]),
    "power": (lambda a: ad.sum_(ad.power(ad.add(ad.mul(a, a), 1.0), 1.5)), [(5,)]),
    "sqrt": (lambda a: ad.sum_(ad.sqrt(ad.add(ad.mul(a, a), 0.5))), [(5,)]),
    "exp": (lambda a: ad.sum_(ad.exp(a)), [(5,)]),
    "log10": (lambda a: ad.sum_(ad.log10(ad.add(ad.mul(a, a), 1.0))), [(5,)]),
    "sigmoid": (lambda a: ad.sum_(ad.sigmoid(a) ** 2), [(6,)]),
    "tanh": (lambda a: ad.sum_(ad.tanh(a) ** 2), [(6,)]),
    "relu": (lambda a: ad.sum_(ad.relu(a) ** 2), [(6,)]),
    "sum_axis": (lambda a: ad.sum_(ad.sum_(a, axis=1) ** 2), [(3, 4)]),
    "mean_axis": (lambda a: ad.sum_(ad.mean(a, axis=0, keepdims=True) ** 2), [(3, 4)]),
    "dot": (lambda a, b: ad.sum_(ad.dot(a, b) ** 2), [(2, 5), (2, 5)]),
    "matmul_2d": (lambda a, b: ad.sum_(ad.matmul(a, b) ** 2), [(3, 4), (4, 2)]),
    "matmul_shared": (lambda a, b: ad.sum_(ad.matmul(a, b) ** 2), [(2, 3, 4), (4, 2)]),
    "matmul_batched": (lambda a, b: ad.sum_(ad.matmul(a, b) ** 2), [(2, 3, 4), (2, 4, 2)]),
    "transpose": (lambda a, b: ad.sum_(ad.mul(ad.transpose(a, (1, 0, 2)), b)), [(2, 3, 4), (3, 2, 4)]),
    "reshape": (lambda a: ad.sum_(ad.reshape(a, (4, 3)) ** 3), [(3, 4)]),
    "broadcast_to": (lambda a: ad.sum_(ad.broadcast_to(a, (2, 3, 4)) ** 2 * 0.5), [(3, 1)]),
    "concat": (lambda a, b: ad.sum_(ad.concat([a, b], axis=1) ** 3), [(2, 3), (2, 2)]),
    "stack": (lambda a, b: ad.sum_(ad.mul(ad.stack([a, b], axis=0), ad.stack([b, a], axis=0))), [(3,), (3,)]),
    "slice": (lambda a: ad.sum_(ad.slice_(a, (slice(1, None), 0)) ** 2), [(3, 4)]),
    "getitem": (lambda a: ad.sum_(a[:, 1:3] ** 2), [(3, 4)]),
    "overlap_add": (lambda f: ad.sum_(ad.overlap_add(f, 3, 14) ** 2), [(2, 4, 5)]),
}


def case_inputs(name, rng):
    _, shapes = OPS[name]
    shift = 0.3 if name == "relu" else 0.0  # keep relu inputs off the kink
    return [rng.normal(size=s) + shift for s in shapes]
