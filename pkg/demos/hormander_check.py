"""Bracket hierarchy and sampled uniform Hörmander check.

Example 1 has a single jump field cos(x) that vanishes at x = pi/2; the
bracket with the drift fills the gap, so the defect 1 + cos(x)^2 never
drops below 1.  The degenerate control never moves x2 and fails.
"""

from pathlib import Path

from nlhormander import registry
from nlhormander.vecfield import build_hierarchy, uniform_check

H = build_hierarchy(registry.example1(), 1)
print("levels:", H.summary())
rep = uniform_check(H, [(-10, 10)], 10_000, c0=1.0)
print(f"example1: infimum {rep.infimum:.12f} at x = {rep.argmin[0]:.4f}, passed = {rep.passed}")

m5 = registry.example5()
rep5 = uniform_check(build_hierarchy(m5, 1), m5.box, 10_000, c0=1e-4)
print(f"example5: boxed infimum {rep5.infimum:.3e} (26^-3 = {26.0 ** -3:.3e}) at {rep5.argmin}")

neg = registry.load_model(Path(__file__).with_name("degenerate.toml"))
rep0 = uniform_check(build_hierarchy(neg, 2), [(-1, 1), (-1, 1)], 2_000, c0=1e-10)
print(f"degenerate: infimum {rep0.infimum:g}, passed = {rep0.passed}")
