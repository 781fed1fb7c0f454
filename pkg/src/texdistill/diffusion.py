"""Forward-diffusion constants, DDIM inversion/denoising, and denoiser backends.

Timesteps are integers t in [0, T]; alpha_bar[0] is close to (but strictly
below) 1 so predictions at t = 0 stay well defined.
The abstract backend predicts the noise direction; the shipped analytic oracle
models an isotropic Gaussian data distribution and returns the exact optimal
prediction, which makes every downstream guidance identity testable to
numerical precision.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field, replace

import numpy as np


@dataclass(frozen=True)
class NoiseSchedule:
    T: int
    beta: np.ndarray       # (T,), beta[i] is the variance of step i+1
    alpha_bar: np.ndarray  # (T+1,), strictly decreasing, all in (0, 1)

    def sqrt_alpha_bar(self, t: int) -> float:
        return float(np.sqrt(self.alpha_bar[t]))

    def sqrt_one_minus_alpha_bar(self, t: int) -> float:
        return float(np.sqrt(1.0 - self.alpha_bar[t]))

    def gamma(self, t: int) -> float:
        """sqrt(1 - alpha_bar) / sqrt(alpha_bar)."""
        return self.sqrt_one_minus_alpha_bar(t) / self.sqrt_alpha_bar(t)

    def omega(self, t: int) -> float:
        """Gradient weighting; the conventional (1 - alpha_bar)."""
        return float(1.0 - self.alpha_bar[t])


def make_schedule(T: int, beta_start: float = 1e-4, beta_end: float = 0.02,
                  kind: str = "linear") -> NoiseSchedule:
    if not (0.0 < beta_start < beta_end < 1.0):
        raise ValueError("need 0 < beta_start < beta_end < 1")
    if T < 1:
        raise ValueError("T must be >= 1")
    if kind == "linear":
        beta = np.linspace(beta_start, beta_end, T)
    elif kind == "scaled-linear":
        beta = np.linspace(np.sqrt(beta_start), np.sqrt(beta_end), T) ** 2
    else:
        raise ValueError(f"unknown schedule kind: {kind}")
    # t = 0 carries a half-step of the first beta: alpha_bar stays strictly
    # inside (0, 1), so predictions at t = 0 are never singular and the
    # DDIM invert/denoise pair stays exactly reversible end to end.
    alpha_bar = np.concatenate([[np.sqrt(1.0 - beta[0])], np.cumprod(1.0 - beta)])
    return NoiseSchedule(T=T, beta=beta, alpha_bar=alpha_bar)


@dataclass(frozen=True)
class DiffusionState:
    x: np.ndarray
    t: int


@dataclass(frozen=True)
class StyleConditioning:
    feature: np.ndarray
    layer_set: tuple = ()


@dataclass(frozen=True)
class ConditioningBundle:
    """Conditioning axes for a noise prediction; any subset may be absent."""
    text: str | None = None
    negative_text: str | None = None
    style: StyleConditioning | None = None
    geometry: object | None = None

    def unconditional(self) -> "ConditioningBundle":
        return replace(self, text=None, negative_text=None, style=None)

    def with_text(self, text: str | None) -> "ConditioningBundle":
        return replace(self, text=text, negative_text=None, style=None)

    def with_style(self) -> "ConditioningBundle":
        if self.style is None:
            raise ValueError("no style feature in conditioning bundle")
        return replace(self, negative_text=None)


class DenoiserBackend:
    """Interface: deterministic, shape-preserving noise prediction."""

    supports_style_injection: bool = False
    supports_geometry: bool = False

    def predict_noise(self, x_t: np.ndarray, t: int,
                      cond: ConditioningBundle) -> np.ndarray:
        raise NotImplementedError


class AnalyticGaussianOracle(DenoiserBackend):
    """Exact denoiser for a Gaussian data distribution N(mu, sigma^2 I).

    Optimal prediction: eps = sqrt(1-ab) (x - sqrt(ab) mu) / (1 - ab + ab sigma^2),
    with the 0/0 at t = 0, sigma = 0 defined as zero.

    Toy conditioning semantics (for end-to-end guidance tests only):
      - text selects among registered (prompt -> mu) pairs; unknown or absent
        prompts fall back to the base mean;
      - a style feature shifts the effective mean per channel by
        style_gain * feature[:3] (zero-padded when shorter).
    Real backends replace these semantics behind the same interface.
    """

    supports_style_injection = True
    supports_geometry = False

    def __init__(self, mu: np.ndarray, sigma: float, schedule: NoiseSchedule,
                 style_gain: float = 1.0):
        if sigma < 0:
            raise ValueError("sigma must be >= 0")
        self.mu = np.asarray(mu, dtype=np.float64)
        self.sigma = float(sigma)
        self.schedule = schedule
        self.style_gain = float(style_gain)
        self._prompt_means: dict[str, np.ndarray] = {}

    def register_prompt(self, prompt: str, mu: np.ndarray) -> None:
        self._prompt_means[prompt] = np.asarray(mu, dtype=np.float64)

    def _effective_mean(self, cond: ConditioningBundle) -> np.ndarray:
        mu = self.mu
        if cond.text is not None and cond.text in self._prompt_means:
            mu = self._prompt_means[cond.text]
        if cond.style is not None:
            f = np.asarray(cond.style.feature, dtype=np.float64).ravel()
            shift = np.zeros(3)
            shift[:min(3, f.size)] = f[:3]
            mu = mu + self.style_gain * shift
        return mu

    def predict_noise(self, x_t, t, cond):
        x_t = np.asarray(x_t, dtype=np.float64)
        mu = self._effective_mean(cond)
        ab = self.schedule.alpha_bar[t]
        denom = (1.0 - ab) + ab * self.sigma ** 2
        if denom == 0.0:
            return np.zeros_like(x_t)
        return np.sqrt(1.0 - ab) * (x_t - np.sqrt(ab) * mu) / denom


class CountingBackend(DenoiserBackend):
    """Wraps a backend and counts predict_noise calls (test instrumentation)."""

    def __init__(self, inner: DenoiserBackend):
        self.inner = inner
        self.calls = 0
        self.supports_style_injection = inner.supports_style_injection
        self.supports_geometry = inner.supports_geometry

    def predict_noise(self, x_t, t, cond):
        self.calls += 1
        return self.inner.predict_noise(x_t, t, cond)


def make_analytic_oracle(mu: np.ndarray, sigma: float, schedule: NoiseSchedule,
                         style_gain: float = 1.0) -> AnalyticGaussianOracle:
    return AnalyticGaussianOracle(mu, sigma, schedule, style_gain=style_gain)


# ---------------------------------------------------------------------------
# forward noising and DDIM


def add_noise(x0: np.ndarray, t: int, eps: np.ndarray,
              schedule: NoiseSchedule) -> np.ndarray:
    if not (0 <= t <= schedule.T):
        raise ValueError(f"t={t} out of range [0, {schedule.T}]")
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if x0.shape != eps.shape:
        raise ValueError("x0 and eps shapes differ")
    return schedule.sqrt_alpha_bar(t) * x0 + schedule.sqrt_one_minus_alpha_bar(t) * eps


def pseudo_gt(x_t: np.ndarray, t: int, eps_hat: np.ndarray,
              schedule: NoiseSchedule) -> np.ndarray:
    """Single-step clean-image estimate implied by a noise prediction."""
    if not (0 <= t <= schedule.T):
        raise ValueError(f"t={t} out of range [0, {schedule.T}]")
    x_t = np.asarray(x_t, dtype=np.float64)
    return (x_t - schedule.sqrt_one_minus_alpha_bar(t) * np.asarray(eps_hat)) \
        / schedule.sqrt_alpha_bar(t)


def ddim_step(x_t: np.ndarray, t: int, s: int, cond: ConditioningBundle,
              backend: DenoiserBackend, schedule: NoiseSchedule,
              direction: str) -> np.ndarray:
    """One deterministic DDIM update from timestep t to s.

    The prediction is evaluated at the source state (first-order for both
    denoising and inversion).
    """
    if direction not in ("denoise", "invert"):
        raise ValueError(f"unknown direction: {direction}")
    if t == s:
        return np.array(x_t, dtype=np.float64, copy=True)
    if direction == "denoise" and not (0 <= s < t <= schedule.T):
        raise ValueError(f"denoise needs 0 <= s < t <= T, got s={s}, t={t}")
    if direction == "invert" and not (0 <= t < s <= schedule.T):
        raise ValueError(f"invert needs 0 <= t < s <= T, got t={t}, s={s}")
    eps_hat = backend.predict_noise(x_t, t, cond)
    x0_hat = pseudo_gt(x_t, t, eps_hat, schedule)
    return schedule.sqrt_alpha_bar(s) * x0_hat \
        + schedule.sqrt_one_minus_alpha_bar(s) * eps_hat


def ddim_invert_trajectory(x0: np.ndarray, t_target: int, step: int,
                           cond: ConditioningBundle, backend: DenoiserBackend,
                           schedule: NoiseSchedule) -> list[DiffusionState]:
    """Invert x0 up to t_target in increments of `step` (last one may be shorter).

    The full trajectory is kept so interval terms can read both the head state
    and its predecessor.
    """
    if not (0 <= t_target <= schedule.T):
        raise ValueError(f"t_target={t_target} out of range")
    if step < 1:
        raise ValueError("step must be >= 1")
    x = np.array(x0, dtype=np.float64, copy=True)
    states = [DiffusionState(x=x, t=0)]
    t = 0
    while t < t_target:
        s = min(t + step, t_target)
        x = ddim_step(states[-1].x, t, s, cond, backend, schedule, "invert")
        states.append(DiffusionState(x=x, t=s))
        t = s
    return states


# ---------------------------------------------------------------------------
# backend registry

_BACKENDS: dict[str, callable] = {}


def register_backend(name: str, factory) -> None:
    _BACKENDS[name] = factory


def create_backend(name: str, schedule: NoiseSchedule, options: dict) -> DenoiserBackend:
    if name not in _BACKENDS:
        raise KeyError(f"unknown backend '{name}'; known: {sorted(_BACKENDS)}")
    return _BACKENDS[name](schedule, options)


def _analytic_factory(schedule: NoiseSchedule, options: dict) -> DenoiserBackend:
    opts = dict(options or {})
    shape = tuple(opts.get("shape", (64, 64, 3)))
    mu_value = opts.get("mu", [0.5, 0.5, 0.5])
    mu = np.broadcast_to(np.asarray(mu_value, dtype=np.float64), shape).copy()
    oracle = make_analytic_oracle(mu, float(opts.get("sigma", 0.0)), schedule,
                                  style_gain=float(opts.get("style_gain", 1.0)))
    for prompt, value in (opts.get("prompts") or {}).items():
        oracle.register_prompt(
            prompt, np.broadcast_to(np.asarray(value, dtype=np.float64), shape).copy())
    return oracle


register_backend("analytic", _analytic_factory)
