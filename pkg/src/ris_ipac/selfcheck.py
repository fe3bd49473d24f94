"""Numerical self-checks shared by the command line and the test suite."""
import time
from typing import NamedTuple

import numpy as np

from .channel import assemble_channels
from .metrics import fim_channel, fim_finite_difference, fim_relative_error, path_amplitudes

FIM_TOL = 1e-4


class FimCheck(NamedTuple):
    max_error: float
    errors: np.ndarray     # (instances, K)
    seconds: float

    @property
    def passed(self):
        return bool(self.max_error < FIM_TOL)


def random_instance(cfg, rng):
    """Random unit-power beamformers (N, K, Nt) and unit-modulus RIS vector."""
    N, K, Nt, M = cfg.n_subcarriers, cfg.n_ue, cfg.bs.n_elements, cfg.ris.n_elements
    w = (rng.standard_normal((N, K, Nt)) + 1j * rng.standard_normal((N, K, Nt))) / np.sqrt(2 * Nt)
    v = np.exp(2j * np.pi * rng.random(M)) / np.sqrt(M)
    return w, v


def fim_check(cfg, n_instances=20, seed=0, delta_f_error=0.0):
    """Analytic vs central-difference channel FIM on seeded instances.

    Instance ``i`` uses channel seed ``seed + i`` and beamformers drawn
    from the same seed. ``delta_f_error`` perturbs the subcarrier spacing
    of the analytic route only; it exists to prove the check can fail.
    """
    t0 = time.perf_counter()
    errors = np.empty((n_instances, cfg.n_ue))
    for i in range(n_instances):
        c = cfg.replace(seed=int(seed) + i)
        ch = assemble_channels(c)
        w, v = random_instance(c, np.random.default_rng(int(seed) + i))
        for k in range(c.n_ue):
            ad, ar = path_amplitudes(ch, w, v, k)
            chi = float(c.obstruction[k])
            J = fim_channel(ad, ar, chi, ch.tau_d[k], ch.tau_r[:, k], ch.n,
                            ch.delta_f * (1.0 + delta_f_error), c.noise_power)
            J_fd = fim_finite_difference(ad, ar, chi, ch.tau_d[k], ch.tau_r[:, k], ch.n,
                                         ch.delta_f, c.noise_power)
            errors[i, k] = fim_relative_error(J, J_fd)
    return FimCheck(float(errors.max()), errors, time.perf_counter() - t0)
