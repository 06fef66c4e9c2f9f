"""A square that differs from the background only in variance.

Both regions share the same mean, so RSFE (local means) has nothing to fit,
while the Bayes energy separates the two intensity distributions.
"""

from segflow import bregman as B
from segflow.energy import classify_pixels
from segflow.mesh import build_uniform_mesh
from segflow.synthetic import variance_square_image

img, mask = variance_square_image()
for model, iters in (("bayes", 200), ("rsfe", 500)):
    mesh = build_uniform_mesh(64, 64, 1.0)
    cfg = B.SolverConfig(model=model, max_iters=iters)
    state = B.run_split_bregman(cfg, img, mesh, B.circle_phi(mesh, 32, 32, 20))
    dice = B.dice(classify_pixels(state.mesh, state.phi, img), mask)
    print(f"{model:6s} k={state.k:3d} converged={state.converged} Dice={dice:.3f}")
