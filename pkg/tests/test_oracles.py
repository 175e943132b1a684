import numpy as np

import oracles


def test_frozen_values_recompute():
    s = oracles.nystrom_singular_values(oracles.airy_kernel, 300)
    assert np.allclose(s[:4], oracles.AIRY_SIGMA, rtol=1e-11)
    assert abs(np.linalg.norm(s) / oracles.AIRY_HS_NORM - 1) < 1e-11
    r = oracles.nystrom_singular_values(oracles.rational_kernel, 300)
    assert np.allclose(r[:3], oracles.RATIONAL_SIGMA, rtol=1e-11)
    g = oracles.gauss2d_singular_values(4, 150)
    assert np.allclose(g, oracles.GAUSS2D_SIGMA, rtol=1e-11)
