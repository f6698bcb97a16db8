"""Ground-truth stochastic system models and trajectory rollout.

The planar quadrotor has state ``[px, vx, py, vy]`` and control ``[ux, uy]``.
One step is ``x' = A x + B(params) u + d(x, params) + w`` where ``B`` scales
by 1/mass and ``d`` is a quadratic velocity drag. The uncertain parameters are
drawn once per trajectory, which correlates the increments of the whole
trajectory (the process is not Markovian in the state alone).
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np
from scipy.special import betaincinv


class SimulationDivergenceError(RuntimeError):
    """Raised when a rollout produces a non-finite state."""

    def __init__(self, step: int):
        self.step = step
        super().__init__(f"simulation produced a non-finite state at step {step}")


@dataclass(frozen=True)
class QuadrotorParams:
    """Uncertain physical parameters: mass (kg) and dimensionless drag coefficient."""

    mass: float
    drag: float

    def __post_init__(self):
        if not (self.mass > 0):
            raise ValueError(f"mass must be positive, got {self.mass}")
        if self.drag < 0:
            raise ValueError(f"drag must be nonnegative, got {self.drag}")


@dataclass(frozen=True)
class BetaSpec:
    """Shifted/scaled Beta distribution: offset + scale * Beta(shape_a, shape_b).

    ``scale == 0`` degenerates to a point mass at ``offset`` (used for
    deterministic tests); the draw still consumes exactly one uniform so
    random streams stay aligned across configurations.
    """

    shape_a: float
    shape_b: float
    offset: float
    scale: float

    def __post_init__(self):
        if self.shape_a <= 0 or self.shape_b <= 0:
            raise ValueError("Beta shape parameters must be positive")
        if self.scale < 0:
            raise ValueError("scale must be nonnegative")

    def draw(self, rng: np.random.Generator) -> float:
        # Inverse-transform sampling: one uniform per draw, always.
        u = rng.random()
        if self.scale == 0.0:
            return self.offset
        return self.offset + self.scale * float(betaincinv(self.shape_a, self.shape_b, u))

    @property
    def mean(self) -> float:
        return self.offset + self.scale * self.shape_a / (self.shape_a + self.shape_b)


@dataclass(frozen=True)
class ParamPrior:
    """Independent priors for the quadrotor parameters."""

    mass: BetaSpec = field(default_factory=lambda: BetaSpec(2.0, 2.0, 0.75, 0.5))
    drag: BetaSpec = field(default_factory=lambda: BetaSpec(2.0, 5.0, 0.4, 0.2))

    @staticmethod
    def point(mass: float, drag: float) -> "ParamPrior":
        """Degenerate prior concentrated at one parameter value."""
        return ParamPrior(
            mass=BetaSpec(2.0, 2.0, mass, 0.0),
            drag=BetaSpec(2.0, 5.0, drag, 0.0),
        )


def sample_params(prior: ParamPrior, rng: np.random.Generator) -> QuadrotorParams:
    """Draw quadrotor parameters from the prior (mass first, then drag)."""
    return QuadrotorParams(mass=prior.mass.draw(rng), drag=prior.drag.draw(rng))


@dataclass(frozen=True)
class DisturbanceSpec:
    """Per-step additive Gaussian disturbance, one std per state coordinate."""

    per_step_std: np.ndarray

    def __post_init__(self):
        std = np.asarray(self.per_step_std, dtype=float)
        if std.ndim != 1 or not np.all(np.isfinite(std)) or np.any(std < 0):
            raise ValueError("per_step_std must be a 1-d array of finite nonnegative reals")
        object.__setattr__(self, "per_step_std", std)

    @staticmethod
    def zero(state_dim: int) -> "DisturbanceSpec":
        return DisturbanceSpec(np.zeros(state_dim))

    @staticmethod
    def default() -> "DisturbanceSpec":
        """Mild turbulence: smaller std on positions, larger on velocities."""
        return DisturbanceSpec(np.array([0.001, 0.01, 0.001, 0.01]))


def quadrotor_step(x, u, w, params: QuadrotorParams, dt: float = 0.1) -> np.ndarray:
    """One step of the planar quadrotor with quadratic velocity drag.

    State order is [px, vx, py, vy]. Positions integrate velocity plus half a
    step of the applied acceleration; velocities get dt times the applied
    acceleration. Drag contributes -drag * |v| * v to the acceleration on each
    axis (and the matching half-step term on positions).
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    if x.shape != (4,) or u.shape != (2,) or w.shape != (4,):
        raise ValueError(
            f"expected shapes (4,), (2,), (4,); got {x.shape}, {u.shape}, {w.shape}"
        )
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(u)) and np.all(np.isfinite(w))):
        raise ValueError("non-finite values in step inputs")

    px, vx, py, vy = x
    ax = u[0] / params.mass - params.drag * abs(vx) * vx
    ay = u[1] / params.mass - params.drag * abs(vy) * vy
    return np.array(
        [
            px + dt * vx + 0.5 * dt * dt * ax + w[0],
            vx + dt * ax + w[1],
            py + dt * vy + 0.5 * dt * dt * ay + w[2],
            vy + dt * ay + w[3],
        ]
    )


class SystemModel(ABC):
    """Discrete-time stochastic system: a step rule plus parameter/disturbance samplers.

    The step rule must be deterministic given (x, u, w, params).
    """

    state_dim: int
    control_dim: int

    @abstractmethod
    def step(self, x, u, w, params) -> np.ndarray: ...

    @abstractmethod
    def sample_params(self, rng: np.random.Generator): ...

    @abstractmethod
    def mean_params(self): ...

    @abstractmethod
    def sample_disturbance(self, rng: np.random.Generator) -> np.ndarray: ...


class PlanarQuadrotor(SystemModel):
    """The uncertain planar quadrotor benchmark system."""

    state_dim = 4
    control_dim = 2

    def __init__(
        self,
        dt: float = 0.1,
        prior: ParamPrior | None = None,
        disturbance: DisturbanceSpec | None = None,
    ):
        if dt <= 0:
            raise ValueError("dt must be positive")
        self.dt = float(dt)
        self.prior = prior if prior is not None else ParamPrior()
        self.disturbance = (
            disturbance if disturbance is not None else DisturbanceSpec.default()
        )
        if self.disturbance.per_step_std.shape != (4,):
            raise ValueError("disturbance must have 4 coordinates")

    def step(self, x, u, w, params: QuadrotorParams) -> np.ndarray:
        return quadrotor_step(x, u, w, params, dt=self.dt)

    def sample_params(self, rng: np.random.Generator) -> QuadrotorParams:
        return sample_params(self.prior, rng)

    def mean_params(self) -> QuadrotorParams:
        """Parameters at the prior means, for deterministic nominal simulation."""
        return QuadrotorParams(mass=self.prior.mass.mean, drag=self.prior.drag.mean)

    def sample_disturbance(self, rng: np.random.Generator) -> np.ndarray:
        # Scaling by a zero std still consumes the same number of draws,
        # so noiseless and noisy configurations share random streams.
        std = self.disturbance.per_step_std
        return std * rng.standard_normal(std.shape[0])


def rollout(
    model: SystemModel, x0, controls, rng: np.random.Generator
) -> np.ndarray:
    """Simulate one stochastic trajectory under a fixed open-loop control sequence.

    Parameters are sampled once per call; disturbances are sampled i.i.d. per
    step. Returns the states after each step, shape (N, state_dim), i.e.
    (x_1, ..., x_N).

    Raises
    ------
    SimulationDivergenceError
        If any produced state is non-finite, reporting the 1-based step index.
    """
    x = np.asarray(x0, dtype=float)
    u = np.asarray(controls, dtype=float)
    if u.ndim != 2 or u.shape[1] != model.control_dim:
        raise ValueError(
            f"controls must have shape (N, {model.control_dim}), got {u.shape}"
        )
    params = model.sample_params(rng)
    n_steps = u.shape[0]
    states = np.empty((n_steps, model.state_dim))
    for t in range(n_steps):
        w = model.sample_disturbance(rng)
        x = model.step(x, u[t], w, params)
        if not np.all(np.isfinite(x)):
            raise SimulationDivergenceError(t + 1)
        states[t] = x
    return states
