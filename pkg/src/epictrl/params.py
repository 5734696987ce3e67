"""Model parameters with validation.

Defaults reproduce the fixed medical/policy values and the calibrated
behavioral values used for the United States.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ParameterError

POPULATION = 328.2e6
VACCINE_MEAN = 540.0
VACCINE_VARIANCE = 180.0

# Slots of the packed parameter vector handed to compiled kernels.
P_BW, P_BS, P_GAMMA, P_C, P_PHIP, P_PHIM = 0, 1, 2, 3, 4, 5
P_TI, P_TH, P_MI, P_MH, P_DA, P_DG, P_XI, P_KAPPA, P_E0 = 6, 7, 8, 9, 10, 11, 12, 13, 14
N_PACKED = 15


@dataclass(frozen=True)
class ModelParams:
    """All scalars of the model, in per-capita daily units.

    ``eta_split``, when set, re-divides the total prevalence
    ``beta_w + beta_s`` so that the work channel carries the share
    ``eta_split``.  ``ifr``, when set, must equal ``m_i * m_h``.
    """

    beta_w: float = 0.2046
    beta_s: float = 0.2046
    gamma: float = 0.0976
    c: float = 0.4403
    phi_plus: float = 523.932
    phi_minus: float = 52.393
    t_i: int = 10
    t_h: int = 7
    m_i: float = 0.0176
    m_h: float = 0.1705
    lambda_bar: float = 0.3
    delta_a: float = 0.9999
    delta_g: float = 0.9999
    xi: float = 20.0
    e0: float = 7e-5
    kappa: float = 1e-12
    epsilon: float = 0.01
    horizon: int = 600
    eta_split: Optional[float] = None
    ifr: Optional[float] = None

    def __post_init__(self):
        def need(ok, msg):
            if not ok:
                raise ParameterError(msg)

        for name in ("beta_w", "beta_s", "c", "phi_plus", "phi_minus", "xi"):
            v = getattr(self, name)
            need(np.isfinite(v) and v >= 0, f"{name} must be finite and >= 0, got {v!r}")
        for name in ("gamma", "m_i", "m_h"):
            v = getattr(self, name)
            need(0.0 <= v <= 1.0, f"{name} must lie in [0, 1], got {v!r}")
        for name in ("t_i", "t_h"):
            v = getattr(self, name)
            need(float(v).is_integer() and v >= 1, f"{name} must be an integer >= 1, got {v!r}")
        need(0.0 < self.lambda_bar <= 1.0, f"lambda_bar must lie in (0, 1], got {self.lambda_bar!r}")
        need(0.0 <= self.delta_a < 1.0, f"delta_a must lie in [0, 1), got {self.delta_a!r}")
        need(0.0 <= self.delta_g < 1.0, f"delta_g must lie in [0, 1), got {self.delta_g!r}")
        need(0.0 <= self.e0 < 1.0, f"e0 must lie in [0, 1), got {self.e0!r}")
        need(self.kappa > 0, f"kappa must be > 0, got {self.kappa!r}")
        need(0.0 < self.epsilon <= 1.0, f"epsilon must lie in (0, 1], got {self.epsilon!r}")
        need(float(self.horizon).is_integer() and self.horizon >= 2,
             f"horizon must be an integer >= 2, got {self.horizon!r}")
        if self.eta_split is not None:
            need(0.0 <= self.eta_split <= 1.0, f"eta_split must lie in [0, 1], got {self.eta_split!r}")
        if self.ifr is not None:
            need(abs(self.m_i * self.m_h - self.ifr) < 1e-12,
                 f"m_i*m_h = {self.m_i * self.m_h!r} does not match ifr = {self.ifr!r}")

    @property
    def betas(self):
        """Effective (work, social) prevalence after any eta split."""
        if self.eta_split is None:
            return float(self.beta_w), float(self.beta_s)
        total = self.beta_w + self.beta_s
        return self.eta_split * total, (1.0 - self.eta_split) * total

    def replace(self, **changes) -> "ModelParams":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def packed(self) -> np.ndarray:
        """Flat float vector consumed by the compiled kernels."""
        bw, bs = self.betas
        out = np.empty(N_PACKED)
        out[P_BW], out[P_BS] = bw, bs
        out[P_GAMMA], out[P_C] = self.gamma, self.c
        out[P_PHIP], out[P_PHIM] = self.phi_plus, self.phi_minus
        out[P_TI], out[P_TH] = self.t_i, self.t_h
        out[P_MI], out[P_MH] = self.m_i, self.m_h
        out[P_DA], out[P_DG] = self.delta_a, self.delta_g
        out[P_XI], out[P_KAPPA], out[P_E0] = self.xi, self.kappa, self.e0
        return out
