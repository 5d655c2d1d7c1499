"""Kinetic model dx = v dt, dv = -x dt + jumps with a state-dependent kernel.

Small jumps are rewritten through the symmetrising transform into a
jump SDE; the bracket with the transport term makes the check pass.
"""

import numpy as np

from nlhormander import registry
from nlhormander.simulate import SimulationScheme, simulate_ensemble
from nlhormander.symmetrize import kinetic_to_sde
from nlhormander.vecfield import build_hierarchy, uniform_check

km = registry.load_model("kinetic")
model = kinetic_to_sde(km)
H = build_hierarchy(model, 1)
rep = uniform_check(H, [(-3, 3), (-3, 3)], 2_000, c0=1e-3)
print("fields:", H.summary())
print(f"infimum {rep.infimum:.4f}, passed = {rep.passed}")
res = simulate_ensemble(model, SimulationScheme(h=1e-2, eps=0.05, seed=4), [0.5, 0.0], 1.0, 500)
# large jumps beyond delta are alpha-stable with alpha = 1, so the mean does not exist
print("terminal median", np.median(res.good(), axis=0), "failures", res.n_failed)
