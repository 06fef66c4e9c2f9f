"""Split Bregman iteration with periodic anisotropic mesh adaptation."""

from dataclasses import dataclass, fields

import numpy as np

from ..bregman import run_split_bregman
from ..fem import transfer_p0, transfer_p1
from .metric import (cap_metric, mesh_element_metric, optimal_metric, relax_metric,
                     transfer_vertex_metric, vertex_metric)
from .remesh import RemeshOptions, remesh

# element metrics give reference-shaped elements sides of metric length sqrt(3)
EDGE_SCALE = 1.0 / 3.0


@dataclass(frozen=True)
class AdaptConfig:
    """Mesh adaptation parameters.

    ``lambda_min`` and ``lambda_max`` bound the element semi-axes in pixels;
    ``lambda_max=None`` resolves to one eighth of the larger image side.
    """

    tau_star: float = 0.5
    n_breg: int = 3
    omega: float = 0.9
    cap: float = 1000.0
    max_halvings: int = 5
    lambda_min: float = 0.75
    lambda_max: float | None = None
    max_passes: int = 10

    def __post_init__(self):
        for name in ("tau_star", "cap", "lambda_min"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not v > 0:
                raise ValueError(f"{name}: must be a number > 0, got {v!r}")
        if self.cap < 1:
            raise ValueError("cap: must be >= 1")
        for name in ("n_breg", "max_passes"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or v < 1:
                raise ValueError(f"{name}: must be an integer >= 1, got {v!r}")
        if isinstance(self.max_halvings, bool) or not isinstance(self.max_halvings, int) \
                or self.max_halvings < 0:
            raise ValueError("max_halvings: must be an integer >= 0")
        if not 0.0 <= self.omega <= 1.0:
            raise ValueError(f"omega: must lie in [0, 1], got {self.omega!r}")
        if self.lambda_max is not None and not self.lambda_max > self.lambda_min:
            raise ValueError("lambda_max: must exceed lambda_min")

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


class MeshAdapter:
    """Adaptation hook for :func:`run_split_bregman`.

    Adapts after every ``n_breg``-th iteration (counting from one), relaxes
    the new metric against the previous one, remeshes, transfers the fields
    and halves ``tau_star`` (at most ``max_halvings`` times).
    """

    def __init__(self, acfg, width, height, alpha=1.0):
        self.acfg = acfg
        self.alpha = alpha
        self.tau = acfg.tau_star
        self.halvings = 0
        self.lambda_max = acfg.lambda_max if acfg.lambda_max is not None else max(width, height) / 8.0
        self.old_metric = None
        self.old_mesh = None
        self.warnings = []
        self.taus = []
        self.results = []
        self.last_element_metric = None
        self.last_metric_mesh = None

    def target_metric(self, mesh, phi):
        a = self.acfg
        elem = optimal_metric(mesh, phi, self.tau, a.cap, a.lambda_min, self.lambda_max)
        self.last_element_metric, self.last_metric_mesh = elem, mesh
        return vertex_metric(mesh, EDGE_SCALE * elem)

    def old_vertex_metric(self, mesh):
        if self.old_metric is None:
            return vertex_metric(mesh, EDGE_SCALE * mesh_element_metric(mesh))
        if self.old_mesh is mesh:
            return self.old_metric
        return transfer_vertex_metric(self.old_mesh, self.old_metric, mesh)

    def __call__(self, k, mesh, phi, d, b):
        a = self.acfg
        if (k + 1) % a.n_breg != 0:
            return None
        target = self.target_metric(mesh, phi)
        metric = cap_metric(relax_metric(target, self.old_vertex_metric(mesh), a.omega), a.cap)
        res = remesh(mesh, metric, options=RemeshOptions(max_passes=a.max_passes, cap=a.cap))
        if res.warning:
            self.warnings.append(f"iteration {k}: {res.warning}")
        self.results.append(res)
        self.taus.append(self.tau)
        self.old_metric, self.old_mesh = metric, mesh
        if self.halvings < a.max_halvings:
            self.tau /= 2.0
            self.halvings += 1
        new = res.mesh
        # barycentric weights may overshoot by an ulp
        phi_new = np.clip(transfer_p1(mesh, phi, new), -self.alpha, self.alpha)
        return new, phi_new, transfer_p0(mesh, d, new), transfer_p0(mesh, b, new)


def run_split_adapt_bregman(cfg, acfg, img, mesh0, phi0, callback=None):
    """Split-adapt Bregman segmentation.

    Returns the final :class:`BregmanState`; ``state.meshes`` lists the initial
    and every adapted mesh and ``state.adapter`` the :class:`MeshAdapter`.
    """
    adapter = MeshAdapter(acfg, img.width, img.height, cfg.alpha)
    state = run_split_bregman(cfg, img, mesh0, phi0, adapter=adapter, callback=callback)
    state.adapter = adapter
    return state
