"""Random problem instances shared by the acceptance and module tests."""

import numpy as np

from netsyn.generator import Target, generate
from netsyn.sysmodel import NetworkedSystem


def unstable_network(seed, n=5, dims=3, density=0.4):
    return generate(n, dims, density, Target.UNSTABLE, seed).system


def with_channels(sys, seed, inputs=True, disturbances=False, outputs=False, local_shift=0.0):
    """Attach one-dimensional local channels; ``local_shift`` moves every ``A_ii`` right."""
    rng = np.random.default_rng(10_000 + seed)
    n, dims = sys.N, sys.state_dims
    a = {(i, j): np.array(sys.A.block(i, j)) for i in range(n) for j in range(n)
         if i == j or j in sys.in_neighbors[i]}
    for i in range(n):
        a[(i, i)] = a[(i, i)] + local_shift * np.eye(dims[i])
    kw = {"A": a}
    one = [1] * n
    if inputs:
        kw["B"] = {(i, i): rng.standard_normal((dims[i], 1)) / np.sqrt(dims[i]) for i in range(n)}
    if disturbances:
        kw["E"] = {(i, i): rng.standard_normal((dims[i], 1)) / np.sqrt(dims[i]) for i in range(n)}
    if outputs:
        kw["C"] = {(i, i): rng.standard_normal((1, dims[i])) / np.sqrt(dims[i]) for i in range(n)}
    return NetworkedSystem.from_blocks(
        dims, input_dims=one if inputs else None, disturbance_dims=one if disturbances else None,
        output_dims=one if outputs else None, edges=sys.edges(), **kw)


def random_block_symmetric(rng, n_blocks, max_dim=3, gap=1e-4):
    """Random symmetric matrix with ``|lambda_min| > gap``, PD about half of the time."""
    dims = [int(d) for d in rng.integers(1, max_dim + 1, size=n_blocks)]
    size = sum(dims)
    while True:
        g = rng.standard_normal((size, size))
        m = g @ g.T / size
        lam = np.linalg.eigvalsh(m)[0]
        shift = lam - rng.uniform(-0.5, 0.5)
        w = m - shift * np.eye(size)
        w = 0.5 * (w + w.T)
        if abs(np.linalg.eigvalsh(w)[0]) > gap:
            return dims, w
