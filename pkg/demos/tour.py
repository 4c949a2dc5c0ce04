"""Short tour: Green functions, equilibria, and a simulated trajectory."""

import numpy as np

from vortexeq import (
    PsiSpec,
    VortexSystem,
    classify_sphere_triple,
    flat_torus,
    green_value,
    integrate,
    linking_minimax,
    random_point,
)

torus = flat_torus()
print("G(0, (1/2, 1/2)) on the unit torus:", green_value(torus, [0, 0], [0.5, 0.5]))

res = linking_minimax(torus, [1, 1, -1], PsiSpec.kirchhoff_routh(), grid=24)
rep = res.report
print("minimax:", res.termination, "c* lower bound", res.c_star_lower)
print("  witness", np.round(res.witness, 6).tolist())
print("  Morse index", rep.morse_index, "zero modes", rep.zero_modes)

cls = classify_sphere_triple([-3, 1, -3])
print("sphere triple (-3, 1, -3): exists", cls.exists, "cos theta", cls.solutions[0].cos_theta)

sys = VortexSystem(torus, [1, 1, -1])
tr = integrate(sys, random_point(torus, 0, 3), T=2.0, dt=1e-3, record_every=100)
print("trajectory: H drift", tr.h_drift, "closest approach", tr.min_pair_dist.min())
