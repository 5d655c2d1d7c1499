"""Flows and the reduced Malliavin matrix on the linear Kolmogorov system.

For dX1 = X2 dt, dX2 = -X1 dt + dL the Jacobian flow is exp(tM) and the
reduced matrix has a closed form; the simulator reproduces both.
"""

import numpy as np
from scipy.linalg import expm

from nlhormander import registry
from nlhormander.malliavin import kolmogorov_sigma_oracle
from nlhormander.simulate import SimulationScheme, simulate_path

p = simulate_path(registry.example4(), SimulationScheme(h=1e-3, eps=0.05, seed=3), [0.3, 0.0], 1.0)
M = np.array([[0.0, 1.0], [-1.0, 0.0]])
print("J_1 - exp(M):", np.abs(p.J[-1] - expm(M)).max())
print("max |J K - I|:", p.flow_error())
print("Sigma_hat_1 simulated:\n", p.sigma_hat)
print("closed form:\n", kolmogorov_sigma_oracle(1.0))
print(f"{len(p.jumps)} jumps, terminal state {p.states[-1]}")
