"""Random networked systems with guaranteed stability or dissipativity properties."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass

import numpy as np

from .analysis import eigen_stability_oracle
from .blockmat import BlockMatrix
from .errors import ConfigError, GenerationError, NetsynError
from .synthesis import (Mode, SynthesisOptions, synthesize)
from .sysmodel import CostModel, Designation, DesignSpec, NetworkedSystem, QsrSpec

log = logging.getLogger(__name__)

MAX_TRIES = 10
GROWTH = 1.5
MAX_GROWTH_STEPS = 60


class Target(enum.Enum):
    STABLE = "stable"
    UNSTABLE = "unstable"
    STABILIZABLE = "stabilizable"
    DISSIPATIVE = "dissipative"
    DISSIPATIVATABLE = "dissipativatable"


_MODES = {Target.STABLE: Mode.STABILITY, Target.STABILIZABLE: Mode.STABILIZABILITY,
          Target.DISSIPATIVE: Mode.DISSIPATIVITY, Target.DISSIPATIVATABLE: Mode.DISSIPATIVATION}


@dataclass
class Generated:
    system: NetworkedSystem
    target: Target
    seed: int
    attempts: int
    certificate: BlockMatrix | None = None
    qsr: QsrSpec | None = None

    def extra(self):
        """Fields stored next to the system in its JSON file."""
        out = {"generator": {"target": self.target.value, "seed": self.seed,
                             "attempts": self.attempts}}
        if self.certificate is not None:
            out["certificate"] = {"dims": list(self.certificate.row_dims),
                                  "matrix": self.certificate.data.tolist()}
        return out


def local_hurwitz(rng, n):
    """``G - (max Re lambda(G) + margin) I`` with ``margin ~ U[0.5, 2]``."""
    g = rng.standard_normal((n, n))
    shift = np.max(np.linalg.eigvals(g).real) + rng.uniform(0.5, 2.0)
    return g - shift * np.eye(n)


def draw_edges(rng, n, density):
    """Exactly ``round(density * N (N - 1))`` distinct ordered pairs ``(i, j)``, ``i != j``."""
    pairs = [(i, j) for i in range(n) for j in range(n) if i != j]
    k = int(round(density * len(pairs)))
    picked = rng.choice(len(pairs), size=k, replace=False) if k else []
    return sorted(pairs[int(p)] for p in picked)


def _default_qsr(target, n, dims):
    if target in (Target.DISSIPATIVE, Target.DISSIPATIVATABLE):
        return QsrSpec.l2_gain([1] * n, [1] * n, 10.0)
    return None


def _draw(rng, target, n, dims, density, coupling_scale):
    blocks = {"A": {(i, i): local_hurwitz(rng, dims[i]) for i in range(n)}}
    edges = draw_edges(rng, n, density)
    for i, j in edges:
        blocks["A"][(i, j)] = coupling_scale * rng.standard_normal((dims[i], dims[j])) \
            / np.sqrt(dims[j])
    kw = {}
    if target is Target.STABILIZABLE:
        kw["input_dims"] = [1] * n
        blocks["B"] = {(i, i): rng.standard_normal((dims[i], 1)) for i in range(n)}
    if target is Target.DISSIPATIVE:
        kw.update(input_dims=[1] * n, output_dims=[1] * n)
        blocks["B"] = {(i, i): rng.standard_normal((dims[i], 1)) / np.sqrt(dims[i])
                       for i in range(n)}
        blocks["C"] = {(i, i): rng.standard_normal((1, dims[i])) / np.sqrt(dims[i])
                       for i in range(n)}
    if target is Target.DISSIPATIVATABLE:
        kw.update(input_dims=[1] * n, disturbance_dims=[1] * n, output_dims=[1] * n)
        for name, shape in (("B", lambda d: (d, 1)), ("E", lambda d: (d, 1)),
                            ("C", lambda d: (1, d))):
            blocks[name] = {(i, i): rng.standard_normal(shape(dims[i])) / np.sqrt(dims[i])
                            for i in range(n)}
    return NetworkedSystem.from_blocks(dims, edges=None, **kw, **blocks), edges


def _destabilize(sys: NetworkedSystem, edges):
    """Scale the couplings by ``GROWTH`` until the network is unstable."""
    if not edges:
        return None
    diag = BlockMatrix.block_diag([sys.A.block(i, i) for i in range(sys.N)]).data
    coupling = sys.A.data - diag
    scale = 1.0
    for _ in range(MAX_GROWTH_STEPS):
        a = diag + scale * coupling
        if eigen_stability_oracle(a).max_re > 0:
            return sys.with_matrices(A=BlockMatrix(a, sys.state_dims))
        scale *= GROWTH
    return None


def generate(n, dims, density, target=Target.STABLE, seed=0, qsr=None, coupling_scale=1.0,
             options: SynthesisOptions | None = None, max_tries=MAX_TRIES) -> Generated:
    """Draw a system meeting ``target``; certified targets also carry their certificate.

    ``dims`` is the per-subsystem state dimension (an int or a list).
    """
    target = Target(target)
    if n < 1:
        raise ConfigError("N must be at least 1")
    dims = [int(dims)] * n if np.isscalar(dims) else [int(d) for d in dims]
    if len(dims) != n or min(dims) < 1:
        raise ConfigError("state dimensions must be positive, one per subsystem")
    if not 0.0 <= density <= 1.0:
        raise ConfigError("edge density must lie in [0, 1]")
    if qsr is None:
        qsr = _default_qsr(target, n, dims)
    rng = np.random.default_rng(seed)
    for attempt in range(1, max_tries + 1):
        sys, edges = _draw(rng, target, n, dims, density, coupling_scale)
        if target is Target.UNSTABLE:
            out = _destabilize(sys, edges)
            if out is not None:
                return Generated(out, target, seed, attempt)
            continue
        spec = DesignSpec({e: Designation.DESIGNABLE for e in edges}, costs=CostModel.fixed())
        try:
            res = synthesize(_MODES[target], sys, spec, qsr, options=options,
                             raise_on_infeasible=False)
        except NetsynError as exc:
            log.info("attempt %d rejected: %s", attempt, exc)
            continue
        if res.success:
            return Generated(res.system, target, seed, attempt, res.certificate, qsr)
        log.info("attempt %d rejected: %s", attempt, res.status)
    raise GenerationError(f"no {target.value} instance after {max_tries} draws (seed {seed})")


def generate_system(n, dims, density, target=Target.STABLE, seed=0, qsr=None,
                    **kw) -> NetworkedSystem:
    return generate(n, dims, density, target, seed, qsr, **kw).system
