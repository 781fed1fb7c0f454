"""The distillation loop: render, invert, compose the guidance delta, update.

Each step samples a camera and a timestep, renders the current field, builds a
DDIM-inversion trajectory from the rendering, composes the guided update
direction, and routes omega(t) * delta through the renderer into the field
parameters, which an Adam optimizer then updates.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field as dc_field, replace

import numpy as np

from . import field as field_mod
from . import geometry
from .diffusion import ConditioningBundle, DenoiserBackend, NoiseSchedule, \
    ddim_invert_trajectory
from .guidance import GuidanceWeights, cfg_delta, full_delta, style_delta


@dataclass(frozen=True)
class TimestepPolicy:
    min_t: int = 20
    max_t: int = 980
    annealing: str = "none"   # "none" | "linear-decay"
    floor_t: int = 200        # effective max at the final iteration when decaying

    def effective_max(self, iteration: int, total_iterations: int) -> int:
        if self.annealing == "none":
            return self.max_t
        if self.annealing == "linear-decay":
            if total_iterations <= 1:
                return self.floor_t
            frac = iteration / (total_iterations - 1)
            return int(round(self.max_t + frac * (self.floor_t - self.max_t)))
        raise ValueError(f"unknown annealing mode: {self.annealing}")


@dataclass(frozen=True)
class DistillConfig:
    weights: GuidanceWeights = GuidanceWeights()
    iterations: int = 2500
    learning_rate: float = 0.005
    adam_betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8
    timestep_policy: TimestepPolicy = TimestepPolicy()
    inversion_step: int = 25
    camera_policy: geometry.CameraPolicy = dc_field(default_factory=geometry.CameraPolicy)
    method: str = "ism"       # "ism" | "sds"
    background: tuple = geometry.DEFAULT_BACKGROUND
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.method not in ("ism", "sds"):
            raise ValueError(f"unknown method: {self.method}")


@dataclass
class StepReport:
    iteration: int
    t: int
    delta_norm: float
    grad_norm: float
    interval_norm: float
    cfg_norm: float
    style_norm: float
    wall_time: float


class AdamOptimizer:
    def __init__(self, num_params: int, lr: float, betas=(0.9, 0.999), eps=1e-8):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.m = np.zeros(num_params)
        self.v = np.zeros(num_params)
        self.step_count = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.step_count += 1
        self.m = self.b1 * self.m + (1 - self.b1) * grad
        self.v = self.b2 * self.v + (1 - self.b2) * grad * grad
        m_hat = self.m / (1 - self.b1 ** self.step_count)
        v_hat = self.v / (1 - self.b2 ** self.step_count)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def sample_timestep(policy: TimestepPolicy, rng: np.random.Generator,
                    iteration: int, total_iterations: int = 1) -> int:
    hi = policy.effective_max(iteration, total_iterations)
    if hi < policy.min_t:
        raise ValueError("empty timestep range")
    return int(rng.integers(policy.min_t, hi + 1))


def _delta_terms(x0, trajectory, cond, backend, schedule, weights, method, rng):
    """Compose the guided delta; returns (delta, interval, cfg_term, style_term)."""
    if method == "ism":
        head, prev = trajectory[-1], trajectory[-2]
        uncond = cond.unconditional()
        eps_u_t = backend.predict_noise(head.x, head.t, uncond)
        eps_u_prev = backend.predict_noise(prev.x, prev.t, uncond)
        eps_cond = backend.predict_noise(head.x, head.t, cond.with_text(cond.text))
        eps_neg = backend.predict_noise(head.x, head.t, cond.with_text(cond.negative_text))
        interval = eps_u_t - eps_u_prev
        cfg_term = weights.lambda_cfg * (eps_cond - eps_neg)
        if cond.style is not None:
            eps_style = backend.predict_noise(head.x, head.t, cond.with_style())
            style_term = weights.lambda_style * (eps_style - eps_u_t)
        elif weights.lambda_style != 0.0:
            raise ValueError("lambda_style != 0 but no style feature")
        else:
            style_term = np.zeros_like(interval)
        return interval + cfg_term + style_term, interval, cfg_term, style_term

    # single-step (SDS) path: noise x0 directly, guide the prediction
    head = trajectory[-1]
    t = head.t
    eps = rng.standard_normal(x0.shape)
    from .diffusion import add_noise
    x_t = add_noise(x0, t, eps, schedule)
    uncond = cond.unconditional()
    eps_u = backend.predict_noise(x_t, t, uncond)
    eps_cond = backend.predict_noise(x_t, t, cond.with_text(cond.text))
    eps_neg = backend.predict_noise(x_t, t, cond.with_text(cond.negative_text))
    interval = eps_u - eps
    cfg_term = weights.lambda_cfg * (eps_cond - eps_neg)
    if cond.style is not None:
        eps_style = backend.predict_noise(x_t, t, cond.with_style())
        style_term = weights.lambda_style * (eps_style - eps_u)
    elif weights.lambda_style != 0.0:
        raise ValueError("lambda_style != 0 but no style feature")
    else:
        style_term = np.zeros_like(interval)
    return interval + cfg_term + style_term, interval, cfg_term, style_term


def distill_step(mesh: geometry.Mesh, tex_field: field_mod.TextureField,
                 backend: DenoiserBackend, cond: ConditioningBundle,
                 config: DistillConfig, schedule: NoiseSchedule,
                 rng: np.random.Generator, optimizer: AdamOptimizer,
                 iteration: int, total_iterations: int | None = None) -> StepReport:
    start = time.perf_counter()
    total = total_iterations if total_iterations is not None else config.iterations

    cam = geometry.sample_camera(rng, config.camera_policy)
    view = geometry.render_color(mesh, tex_field, cam, background=config.background)
    step_cond = cond
    if backend.supports_geometry:
        maps = geometry.render_geometry_maps(mesh, cam)
        step_cond = replace(cond, geometry=maps)

    t = sample_timestep(config.timestep_policy, rng, iteration, total)
    x0 = view.color

    if config.method == "ism":
        trajectory = ddim_invert_trajectory(
            x0, t, config.inversion_step, step_cond.unconditional(), backend, schedule)
    else:
        from .diffusion import DiffusionState
        trajectory = [DiffusionState(x=x0, t=0), DiffusionState(x=x0, t=t)]

    delta, interval, cfg_term, style_term = _delta_terms(
        x0, trajectory, step_cond, backend, schedule, config.weights,
        config.method, rng)
    if not np.all(np.isfinite(delta)):
        raise FloatingPointError(f"non-finite delta at iteration {iteration}")

    grad = geometry.render_view_gradient(view, schedule.omega(t) * delta, tex_field)
    if not np.all(np.isfinite(grad)):
        raise FloatingPointError(f"non-finite gradient at iteration {iteration}")
    tex_field.params = optimizer.step(tex_field.params, grad)

    return StepReport(
        iteration=iteration, t=t,
        delta_norm=float(np.linalg.norm(delta)),
        grad_norm=float(np.linalg.norm(grad)),
        interval_norm=float(np.linalg.norm(interval)),
        cfg_norm=float(np.linalg.norm(cfg_term)),
        style_norm=float(np.linalg.norm(style_term)),
        wall_time=time.perf_counter() - start)


def distill(mesh: geometry.Mesh, tex_field: field_mod.TextureField,
            backend: DenoiserBackend, cond: ConditioningBundle,
            config: DistillConfig, schedule: NoiseSchedule,
            report_callback=None) -> list[StepReport]:
    """Run the full optimization; mutates tex_field in place, returns reports."""
    if cond.style is None and config.weights.lambda_style != 0.0:
        raise ValueError("lambda_style != 0 requires a style feature")
    rng = np.random.default_rng(config.seed)
    optimizer = AdamOptimizer(tex_field.num_params, config.learning_rate,
                              config.adam_betas, config.adam_eps)
    reports = []
    for i in range(config.iterations):
        report = distill_step(mesh, tex_field, backend, cond, config, schedule,
                              rng, optimizer, i, config.iterations)
        reports.append(report)
        if report_callback is not None:
            report_callback(report)
    return reports
