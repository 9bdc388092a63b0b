"""Admissible curves, covariant derivative along curves, parallel transport.

The base path of an admissible curve is generated, not supplied: it solves
dx/dt = rho(x) c(t) for the given curve c in the anchored bundle.  Parallel
transport solves the joint system with dpsi/dt = -gamma(x, psi) c(t); for
non-affine coefficients the fibre solution may escape in finite time, so a
blow-up (any state component beyond 1e12) is a first-class outcome of
:func:`parallel_transport`, reported with the first exceedance time.

Integration is classical fixed-step fourth-order Runge-Kutta: deterministic
and easy to verify for order; there is no adaptive stepping.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .exprlang import Expr, diff, evaluate, variables
from .geometry import BundleSpec, base_env, fiber_env, _expr, _floats
from .affine import AffineCoeffs

__all__ = [
    "CurveSpecV",
    "SampledPath",
    "TransportResult",
    "BlowUpError",
    "BLOWUP_THRESHOLD",
    "DEFAULT_STEPS",
    "integrate_base",
    "parallel_transport",
    "parallel_transport_linear",
    "cov_deriv_along",
    "transport_affine_action",
    "curve_value",
]

BLOWUP_THRESHOLD = 1e12
DEFAULT_STEPS = 1000

STATUS_COMPLETED = "completed"
STATUS_BLOWUP = "blow-up"


class BlowUpError(RuntimeError):
    """A state component exceeded the blow-up threshold during integration."""

    def __init__(self, t_star: float):
        super().__init__(f"state exceeded {BLOWUP_THRESHOLD:.0e} at t = {t_star!r}")
        self.t_star = t_star


@dataclass(frozen=True)
class CurveSpecV:
    """Curve in the anchored bundle: k component expressions in t, plus the
    initial base point and the parameter interval."""

    components: tuple[Expr, ...]
    x0: tuple[float, ...]
    t0: float
    t1: float

    def __post_init__(self):
        object.__setattr__(
            self, "components", tuple(_expr(c) for c in self.components)
        )
        object.__setattr__(self, "x0", _floats(self.x0))
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "t1", float(self.t1))
        if not self.t1 > self.t0:
            raise ValueError(f"need t1 > t0, got [{self.t0}, {self.t1}]")
        for c in self.components:
            extra = variables(c) - {"t"}
            if extra:
                raise ValueError(
                    f"curve components may depend on t only; found {sorted(extra)}"
                )


def curve_value(curve: CurveSpecV, t: float) -> tuple[float, ...]:
    env = {"t": t}
    return tuple(evaluate(c, env) for c in curve.components)


@dataclass(frozen=True)
class SampledPath:
    """Vector path on a uniform time grid with interpolation.

    Uses cubic Hermite interpolation when node derivatives are available
    (known exactly from the ODE right-hand side) and a four-point Lagrange
    cubic otherwise.
    """

    times: tuple[float, ...]
    values: tuple[tuple[float, ...], ...]
    derivs: tuple[tuple[float, ...], ...] | None = None

    @property
    def t0(self) -> float:
        return self.times[0]

    @property
    def t1(self) -> float:
        return self.times[-1]

    def _segment(self, t: float) -> tuple[int, float]:
        if len(self.times) < 2:
            return 0, 0.0
        h = (self.t1 - self.t0) / (len(self.times) - 1)
        idx = int((t - self.t0) / h)
        idx = max(0, min(idx, len(self.times) - 2))
        return idx, h

    def at(self, t: float) -> tuple[float, ...]:
        if len(self.times) == 1:
            return self.values[0]
        idx, h = self._segment(t)
        s = (t - self.times[idx]) / h
        y0 = np.array(self.values[idx])
        y1 = np.array(self.values[idx + 1])
        if self.derivs is not None:
            d0 = np.array(self.derivs[idx])
            d1 = np.array(self.derivs[idx + 1])
            h00 = 2 * s**3 - 3 * s**2 + 1
            h10 = s**3 - 2 * s**2 + s
            h01 = -2 * s**3 + 3 * s**2
            h11 = s**3 - s**2
            value = h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1
            return tuple(float(c) for c in value)
        # Lagrange cubic on a clamped 4-node window
        lo = max(0, min(idx - 1, len(self.times) - 4))
        window_t = self.times[lo : lo + 4]
        window_y = [np.array(v) for v in self.values[lo : lo + 4]]
        value = np.zeros_like(window_y[0])
        for i, ti in enumerate(window_t):
            weight = 1.0
            for j, tj in enumerate(window_t):
                if j != i:
                    weight *= (t - tj) / (ti - tj)
            value = value + weight * window_y[i]
        return tuple(float(c) for c in value)

    def derivative_fd(self, t: float, step: float) -> tuple[float, ...]:
        """Central difference of the interpolant, clipped to the domain."""
        lo = max(self.t0, t - step)
        hi = min(self.t1, t + step)
        a = np.array(self.at(lo))
        b = np.array(self.at(hi))
        return tuple(float(c) for c in (b - a) / (hi - lo))


@dataclass(frozen=True)
class TransportResult:
    """Joint base/fibre solution with step diagnostics.

    On ``status == "blow-up"`` the sampled arrays stop at the last state
    before the exceedance and ``t_star`` records the offending time; on a
    completed run every sampled value is finite and ``t_star`` is None.
    """

    times: tuple[float, ...]
    x: tuple[tuple[float, ...], ...]
    psi: tuple[tuple[float, ...], ...]
    status: str
    t_star: float | None
    steps: int
    dt: float
    xdot: tuple[tuple[float, ...], ...]
    psidot: tuple[tuple[float, ...], ...]

    def x_path(self) -> SampledPath:
        return SampledPath(self.times, self.x, self.xdot)

    def psi_path(self) -> SampledPath:
        return SampledPath(self.times, self.psi, self.psidot)

    def x_at(self, t: float) -> tuple[float, ...]:
        return self.x_path().at(t)

    def psi_at(self, t: float) -> tuple[float, ...]:
        return self.psi_path().at(t)


def _rk4(
    f: Callable[[float, np.ndarray], np.ndarray],
    state0: Sequence[float],
    t0: float,
    t1: float,
    steps: int,
) -> tuple[list[float], list[np.ndarray], list[np.ndarray], str, float | None]:
    """Classical fixed-step RK4; stops at the first blow-up."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    h = (t1 - t0) / steps
    y = np.array(state0, dtype=float)
    times = [t0]
    states = [y]
    derivs = [f(t0, y)]
    for i in range(steps):
        t = t0 + i * h
        k1 = f(t, y)
        k2 = f(t + h / 2.0, y + (h / 2.0) * k1)
        k3 = f(t + h / 2.0, y + (h / 2.0) * k2)
        k4 = f(t + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t_next = t0 + (i + 1) * h
        if not np.all(np.isfinite(y)) or float(np.max(np.abs(y))) > BLOWUP_THRESHOLD:
            return times, states, derivs, STATUS_BLOWUP, t_next
        times.append(t_next)
        states.append(y)
        derivs.append(f(t_next, y))
    return times, states, derivs, STATUS_COMPLETED, None


def _base_rhs(
    spec: BundleSpec, curve: CurveSpecV
) -> Callable[[float, np.ndarray], np.ndarray]:
    n, k = spec.base_dim, spec.v_rank

    def f(t: float, state: np.ndarray) -> np.ndarray:
        env = base_env(state)
        c = [evaluate(comp, {"t": t}) for comp in curve.components]
        return np.array(
            [
                sum(evaluate(spec.anchor[i][a], env) * c[a] for a in range(k))
                for i in range(n)
            ]
        )

    return f


def _joint_rhs(
    spec: BundleSpec, curve: CurveSpecV
) -> Callable[[float, np.ndarray], np.ndarray]:
    n, k, m = spec.base_dim, spec.v_rank, spec.e_dim

    def f(t: float, state: np.ndarray) -> np.ndarray:
        env = fiber_env(state[:n], state[n:])
        c = [evaluate(comp, {"t": t}) for comp in curve.components]
        dx = [
            sum(evaluate(spec.anchor[i][a], env) * c[a] for a in range(k))
            for i in range(n)
        ]
        dpsi = [
            -sum(evaluate(spec.gamma[alpha][a], env) * c[a] for a in range(k))
            for alpha in range(m)
        ]
        return np.array(dx + dpsi)

    return f


def _joint_linear_rhs(
    spec: BundleSpec,
    gamma1: tuple[tuple[tuple[Expr, ...], ...], ...],
    curve: CurveSpecV,
) -> Callable[[float, np.ndarray], np.ndarray]:
    n, k = spec.base_dim, spec.v_rank
    m = len(gamma1)

    def f(t: float, state: np.ndarray) -> np.ndarray:
        env = base_env(state[:n])
        w = state[n:]
        c = [evaluate(comp, {"t": t}) for comp in curve.components]
        dx = [
            sum(evaluate(spec.anchor[i][a], env) * c[a] for a in range(k))
            for i in range(n)
        ]
        dw = [
            -sum(
                evaluate(gamma1[alpha][a][beta], env) * w[beta] * c[a]
                for a in range(k)
                for beta in range(m)
            )
            for alpha in range(m)
        ]
        return np.array(dx + dw)

    return f


def integrate_base(
    spec: BundleSpec, curve: CurveSpecV, steps: int = DEFAULT_STEPS
) -> SampledPath:
    """Integrate the admissible base path dx/dt = rho(x) c(t).

    Raises :class:`BlowUpError` if a state component exceeds the threshold.
    """
    times, states, derivs, status, t_star = _rk4(
        _base_rhs(spec, curve), curve.x0, curve.t0, curve.t1, steps
    )
    if status == STATUS_BLOWUP:
        raise BlowUpError(t_star)
    return SampledPath(
        tuple(times),
        tuple(tuple(float(c) for c in s) for s in states),
        tuple(tuple(float(c) for c in d) for d in derivs),
    )


def _split_result(
    spec: BundleSpec,
    times: list[float],
    states: list[np.ndarray],
    derivs: list[np.ndarray],
    status: str,
    t_star: float | None,
    steps: int,
    dt: float,
) -> TransportResult:
    n = spec.base_dim
    return TransportResult(
        times=tuple(times),
        x=tuple(tuple(float(c) for c in s[:n]) for s in states),
        psi=tuple(tuple(float(c) for c in s[n:]) for s in states),
        status=status,
        t_star=t_star,
        steps=steps,
        dt=dt,
        xdot=tuple(tuple(float(c) for c in d[:n]) for d in derivs),
        psidot=tuple(tuple(float(c) for c in d[n:]) for d in derivs),
    )


def parallel_transport(
    spec: BundleSpec,
    curve: CurveSpecV,
    psi0: Sequence[float],
    steps: int = DEFAULT_STEPS,
) -> TransportResult:
    """Horizontal lift of the curve through psi0: the joint solution of the
    base equation and dpsi/dt = -gamma(x, psi) c(t).

    Affineness is not required; finite-time escape of the fibre solution is
    reported via ``status`` and ``t_star``, not raised.
    """
    if len(psi0) != spec.e_dim:
        raise ValueError(f"expected {spec.e_dim} fibre components, got {len(psi0)}")
    state0 = list(curve.x0) + [float(p) for p in psi0]
    times, states, derivs, status, t_star = _rk4(
        _joint_rhs(spec, curve), state0, curve.t0, curve.t1, steps
    )
    dt = (curve.t1 - curve.t0) / steps
    return _split_result(spec, times, states, derivs, status, t_star, steps, dt)


def parallel_transport_linear(
    spec: BundleSpec,
    gamma1: tuple[tuple[tuple[Expr, ...], ...], ...],
    curve: CurveSpecV,
    w0: Sequence[float],
    steps: int = DEFAULT_STEPS,
) -> TransportResult:
    """Parallel transport in the model bundle under the linear coefficients."""
    if len(w0) != len(gamma1):
        raise ValueError(f"expected {len(gamma1)} fibre components, got {len(w0)}")
    state0 = list(curve.x0) + [float(p) for p in w0]
    times, states, derivs, status, t_star = _rk4(
        _joint_linear_rhs(spec, gamma1, curve), state0, curve.t0, curve.t1, steps
    )
    dt = (curve.t1 - curve.t0) / steps
    return _split_result(spec, times, states, derivs, status, t_star, steps, dt)


def cov_deriv_along(
    spec: BundleSpec,
    curve: CurveSpecV,
    psi_path: Sequence[Expr | str] | SampledPath | TransportResult,
    t: float,
    steps: int = DEFAULT_STEPS,
) -> tuple[float, ...]:
    """Covariant derivative of a fibre path along the admissible curve:
    dpsi/dt + gamma(x(t), psi(t)) c(t), valued in the model fibre.

    ``psi_path`` may be component expressions in t (differentiated exactly)
    or a sampled path (differentiated by central differences with step
    (t1 - t0) / (10 * steps)).
    """
    if not curve.t0 <= t <= curve.t1:
        raise ValueError(f"t = {t} outside [{curve.t0}, {curve.t1}]")
    base = integrate_base(spec, curve, steps)
    x_here = base.at(t)

    if isinstance(psi_path, TransportResult):
        psi_path = psi_path.psi_path()
    if isinstance(psi_path, SampledPath):
        psi_here = psi_path.at(t)
        fd_step = (curve.t1 - curve.t0) / (10.0 * steps)
        dpsi = psi_path.derivative_fd(t, fd_step)
    else:
        exprs = [_expr(c) for c in psi_path]
        env = {"t": t}
        psi_here = tuple(evaluate(c, env) for c in exprs)
        dpsi = tuple(evaluate(diff(c, "t"), env) for c in exprs)

    env = fiber_env(x_here, psi_here)
    c = curve_value(curve, t)
    g = [
        sum(evaluate(spec.gamma[alpha][a], env) * c[a] for a in range(spec.v_rank))
        for alpha in range(spec.e_dim)
    ]
    return tuple(d + gz for d, gz in zip(dpsi, g, strict=True))


def transport_affine_action(
    spec: BundleSpec,
    ac: AffineCoeffs,
    curve: CurveSpecV,
    psi0: Sequence[float],
    w0: Sequence[float],
    steps: int = DEFAULT_STEPS,
) -> float:
    """Residual of the affine action of parallel transport.

    Transports psi0 and psi0 + w0 under the full connection and w0 under the
    linear part, all with jointly integrated base paths, and returns the
    maximum over the grid of |T(psi0 + w0) - T(psi0) - T_lin(w0)|.
    """
    shifted = tuple(p + w for p, w in zip(psi0, w0, strict=True))
    first = parallel_transport(spec, curve, psi0, steps)
    second = parallel_transport(spec, curve, shifted, steps)
    linear = parallel_transport_linear(spec, ac.gamma1, curve, w0, steps)
    for result in (first, second, linear):
        if result.status == STATUS_BLOWUP:
            raise BlowUpError(result.t_star)
    residual = 0.0
    for p1, p2, w in zip(first.psi, second.psi, linear.psi, strict=True):
        residual = max(
            residual,
            max(abs(b - a - c) for a, b, c in zip(p1, p2, w, strict=True)),
        )
    return residual
