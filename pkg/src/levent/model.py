"""Model matrices for two Coulomb-coupled, trap-modulated levitated particles.

All rates and times are dimensionless: frequencies in units of the bare trap
frequency omega_m and time in ``1 / omega_m``. The state vector is
``(x1, p1, x2, p2)``.

Every time-dependent matrix is affine in the instantaneous trap frequency
``w(t) = (1 + alpha cos(Omega t))**2``; the ``*_parts`` helpers return the
constant and ``w``-proportional pieces that the compiled kernels consume.
"""
import math
from dataclasses import dataclass, fields

import numpy as np
from scipy import constants

from .errors import ConfigError

STRATEGIES = ("identical", "independent")

_POSITIONS = np.diag([1.0, 0.0, 1.0, 0.0])
_MOMENTA = np.diag([0.0, 1.0, 0.0, 1.0])


@dataclass(frozen=True)
class ModelConfig:
    """Dimensionless simulation parameters.

    ``kba_ratio`` is K_ba / omega_x(t): back-action follows the modulated trap
    frequency. ``g`` is signed; positive values shift the differential mode
    up in frequency. ``p_cost`` scales the state cost ``P = p_cost * I``.
    """

    alpha: float = 0.2
    Omega: float = 2.0
    g: float = 0.2
    eta: float = 1.0
    kba_ratio: float = 0.05
    kth: float = 2.5e-3
    gamma: float = 1e-10
    strategy: str = "independent"
    charge_ratio: float = 3.0
    q: float = 0.1
    p_cost: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            if f.name == "strategy":
                continue
            value = getattr(self, f.name)
            if isinstance(value, bool) or not isinstance(value, (int, float, np.floating, np.integer)):
                raise ConfigError(f"must be a number, got {value!r}", key=f.name)
            if not math.isfinite(value):
                raise ConfigError("must be finite", key=f.name)
            object.__setattr__(self, f.name, float(value))
        if not 0.0 <= self.alpha < 1.0:
            raise ConfigError(f"must satisfy 0 <= alpha < 1, got {self.alpha}", key="alpha")
        if self.Omega <= 0.0:
            raise ConfigError(f"must be > 0, got {self.Omega}", key="Omega")
        if not 0.0 <= self.eta <= 1.0:
            raise ConfigError(f"must lie in [0, 1], got {self.eta}", key="eta")
        if self.q <= 0.0:
            raise ConfigError(f"must be > 0, got {self.q}", key="q")
        for name in ("kba_ratio", "kth", "gamma", "p_cost"):
            if getattr(self, name) < 0.0:
                raise ConfigError(f"must be >= 0, got {getattr(self, name)}", key=name)
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"must be one of {STRATEGIES}, got {self.strategy!r}", key="strategy")

    @property
    def period(self):
        return 2.0 * math.pi / self.Omega


@dataclass(frozen=True)
class PhysicalParams:
    """Experimental inputs in SI units (``trap_frequency`` in rad/s).

    ``thermal_ratio`` overrides the high-temperature estimate
    ``K_th = gamma * k_B T / (hbar omega_m)`` when given.
    """

    radius: float = 50e-9
    density: float = 1850.0
    charges: tuple = (30, 30)
    separation: float = 3e-6
    trap_frequency: float = 2.0 * math.pi * 29.6e3
    temperature: float = 300.0
    backaction_ratio: float = 0.053
    damping_ratio: float = 1.4e-11
    eta: float = 1.0
    thermal_ratio: float = None

    def __post_init__(self):
        for name in ("radius", "density", "separation", "trap_frequency"):
            if not getattr(self, name) > 0.0:
                raise ConfigError(f"must be > 0, got {getattr(self, name)}", key=name)
        for name in ("temperature", "backaction_ratio", "damping_ratio"):
            if getattr(self, name) < 0.0:
                raise ConfigError(f"must be >= 0, got {getattr(self, name)}", key=name)
        if self.thermal_ratio is not None and self.thermal_ratio < 0.0:
            raise ConfigError(f"must be >= 0, got {self.thermal_ratio}", key="thermal_ratio")
        if not 0.0 <= self.eta <= 1.0:
            raise ConfigError(f"must lie in [0, 1], got {self.eta}", key="eta")
        if len(self.charges) != 2 or any(int(c) != c for c in self.charges):
            raise ConfigError("must be a pair of integer multiples of e", key="charges")
        object.__setattr__(self, "charges", tuple(int(c) for c in self.charges))


@dataclass(frozen=True)
class DerivedQuantities:
    mass: float
    x_zpf: float
    coupling_rate: float
    n_thermal: float


def derive_physical(p, template=None):
    """Convert SI inputs to a :class:`ModelConfig` plus the intermediate quantities.

    The coupling ``g = -Q1 Q2 x_zpf^2 / (8 pi eps0 hbar d^3)`` keeps its sign, so
    like charges give ``g < 0``. Modulation, feedback and cost settings are
    copied from ``template``.
    """
    if template is None:
        template = ModelConfig()
    if p.separation == 0.0:
        raise ConfigError("separation must be nonzero", key="separation")
    if p.trap_frequency <= 0.0:
        raise ConfigError("trap frequency must be positive", key="trap_frequency")
    hbar = constants.hbar
    mass = p.density * 4.0 / 3.0 * math.pi * p.radius ** 3
    x_zpf = math.sqrt(hbar / (mass * p.trap_frequency))
    q1, q2 = (c * constants.e for c in p.charges)
    coupling = -q1 * q2 * x_zpf ** 2 / (8.0 * math.pi * constants.epsilon_0 * hbar * p.separation ** 3)
    n_th = constants.k * p.temperature / (hbar * p.trap_frequency)
    kth = p.thermal_ratio if p.thermal_ratio is not None else p.damping_ratio * n_th
    cfg = ModelConfig(
        alpha=template.alpha,
        Omega=template.Omega,
        g=coupling / p.trap_frequency,
        eta=p.eta,
        kba_ratio=p.backaction_ratio,
        kth=kth,
        gamma=p.damping_ratio,
        strategy=template.strategy,
        charge_ratio=template.charge_ratio,
        q=template.q,
        p_cost=template.p_cost,
    )
    return cfg, DerivedQuantities(mass=mass, x_zpf=x_zpf, coupling_rate=coupling, n_thermal=n_th)


def omega_x(t, cfg):
    """Instantaneous trap frequency ``(1 + alpha cos(Omega t))**2``."""
    s = 1.0 + cfg.alpha * np.cos(cfg.Omega * np.asarray(t, dtype=float))
    return s * s


def kba(t, cfg):
    return cfg.kba_ratio * omega_x(t, cfg)


def drift_parts(cfg):
    """``(A0, A1)`` with ``A(t) = A0 + omega_x(t) A1``."""
    g = cfg.g
    A0 = np.array([
        [0.0, 1.0, 0.0, 0.0],
        [-2.0 * g, -cfg.gamma, 2.0 * g, 0.0],
        [0.0, 0.0, 0.0, 1.0],
        [2.0 * g, 0.0, -2.0 * g, -cfg.gamma],
    ])
    A1 = np.zeros((4, 4))
    A1[1, 0] = A1[3, 2] = -1.0
    return A0, A1


def drift_matrix(t, cfg):
    # Hamilton's equations of the full Hamiltonian, including the +2g cross terms
    A0, A1 = drift_parts(cfg)
    return A0 + float(omega_x(t, cfg)) * A1


def noise_parts(cfg):
    """``(N0, N1)`` with ``N(t) = N0 + omega_x(t) N1``."""
    return cfg.kth * _MOMENTA, cfg.kba_ratio * _MOMENTA


def noise_matrix(t, cfg):
    return (float(kba(t, cfg)) + cfg.kth) * _MOMENTA


def measurement_matrix(t, cfg):
    """4x2 matrix ``sqrt(eta K_ba(t))`` times the position selector."""
    C = np.zeros((4, 2))
    C[0, 0] = C[2, 1] = 1.0
    return math.sqrt(cfg.eta * float(kba(t, cfg))) * C


def measurement_gain_parts(cfg):
    """``(G0, G1)`` with ``4 C(t) C(t)^T = G0 + omega_x(t) G1``."""
    return np.zeros((4, 4)), 4.0 * cfg.eta * cfg.kba_ratio * _POSITIONS


def feedback_matrix(strategy, charge_ratio=None):
    """Feedback input matrix for identical (one field) or independent control.

    Identical control pushes both momenta with one signal, weighted by the
    charge ratio; equal charges leave the differential mode uncontrollable.
    """
    if strategy == "independent":
        B = np.zeros((4, 2))
        B[1, 0] = B[3, 1] = 1.0
        return B
    if strategy == "identical":
        if charge_ratio is None:
            raise ConfigError("identical feedback needs a charge ratio", key="charge_ratio")
        if abs(abs(charge_ratio) - 1.0) < 1e-12:
            raise ConfigError(
                "identical feedback with |Q1/Q2| = 1 is uncontrollable; "
                "the particles must carry unequal charges",
                key="charge_ratio",
            )
        return np.array([[0.0], [1.0], [0.0], [float(charge_ratio)]])
    raise ConfigError(f"unknown strategy {strategy!r}", key="strategy")


def cost_matrices(cfg):
    """State cost ``P`` and control effort ``Q`` for the configured strategy."""
    P = cfg.p_cost * np.eye(4)
    m = 1 if cfg.strategy == "identical" else 2
    return P, cfg.q * np.eye(m)


@dataclass(frozen=True)
class ModelMatrices:
    A: np.ndarray
    Bfb: np.ndarray
    C: np.ndarray
    N: np.ndarray
    P: np.ndarray
    Q: np.ndarray


def model_matrices(t, cfg):
    P, Q = cost_matrices(cfg)
    return ModelMatrices(
        A=drift_matrix(t, cfg),
        Bfb=feedback_matrix(cfg.strategy, cfg.charge_ratio),
        C=measurement_matrix(t, cfg),
        N=noise_matrix(t, cfg),
        P=P,
        Q=Q,
    )


def mean_drift(cfg):
    """Drift with ``omega_x`` replaced by its period average ``1 + alpha**2 / 2``."""
    A0, A1 = drift_parts(cfg)
    return A0 + (1.0 + 0.5 * cfg.alpha ** 2) * A1


def effective_detunings(cfg):
    """Rotating-wave detunings of the two normal modes and their resonances.

    Returns ``((delta_plus, delta_minus), (omega_res_plus, omega_res_minus))``;
    the resonances are the modulation frequencies at which each detuning
    vanishes. Valid for ``|g| << 1`` and ``alpha << 1``.
    """
    delta_plus = 1.0 + cfg.alpha ** 2 / 4.0 - cfg.Omega / 2.0
    delta_minus = delta_plus + 2.0 * cfg.g
    res_plus = 2.0 + cfg.alpha ** 2 / 2.0
    return (delta_plus, delta_minus), (res_plus, res_plus + 4.0 * cfg.g)


def parametric_resonances(cfg):
    """Exact parametric resonances ``2 * sqrt(<omega_x> + {0, 4g})`` of the normal modes.

    Unlike :func:`effective_detunings` this does not linearize in ``g``.
    The differential-mode entry is NaN when that mode is unbound.
    """
    base = 1.0 + 0.5 * cfg.alpha ** 2
    minus = base + 4.0 * cfg.g
    return 2.0 * math.sqrt(base), (2.0 * math.sqrt(minus) if minus > 0 else float("nan"))
