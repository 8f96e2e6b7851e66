"""ODE integration core: adaptive Dormand-Prince 5(4) steppers (numba-jitted,
batched over parameter rows) and a fixed-step RK4 reference integrator used
as the validation oracle."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

__all__ = ["OdeSolverSettings", "SimulatorFailure", "rk4_fixed"]


class SimulatorFailure(RuntimeError):
    """Forward simulation failed (ODE blow-up, step underflow, hook error).

    Samplers treat this as discrepancy = +inf / log-likelihood = -inf rather
    than aborting a run.
    """


@dataclass(frozen=True)
class OdeSolverSettings:
    """Solver selection: adaptive Dormand-Prince (tolerance-controlled) or
    fixed-step classical RK4."""

    method: str = "dopri_adaptive"
    rtol: float = 1e-8
    atol: float = 1e-8
    step: float = 1e-3  # rk4_fixed only

    def __post_init__(self):
        if self.method not in ("dopri_adaptive", "rk4_fixed", "expm_analytic"):
            raise ValueError(f"unknown ODE method {self.method!r}")
        if self.rtol <= 0 or self.atol <= 0 or self.step <= 0:
            raise ValueError("solver tolerances and step must be positive")


def rk4_fixed(rhs, y0, t0, t1, step):
    """Classical fixed-step RK4 from ``t0`` to ``t1``; the final step is
    shortened to land exactly on ``t1``."""
    y = np.array(y0, dtype=float)
    t = float(t0)
    n_full, rem = divmod(t1 - t0, step)
    steps = [step] * int(n_full) + ([rem] if rem > 1e-15 else [])
    for h in steps:
        k1 = rhs(t, y)
        k2 = rhs(t + h / 2, y + h / 2 * k1)
        k3 = rhs(t + h / 2, y + h / 2 * k2)
        k4 = rhs(t + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
    return y


# Dormand-Prince 5(4) tableau
_C = (0.0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0)
_A = (
    (1.0 / 5,),
    (3.0 / 40, 9.0 / 40),
    (44.0 / 45, -56.0 / 15, 32.0 / 9),
    (19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729),
    (9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656),
    (35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84),
)
_B5 = (35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84, 0.0)
_B4 = (5179.0 / 57600, 0.0, 7571.0 / 16695, 393.0 / 640, -92097.0 / 339200, 187.0 / 2100, 1.0 / 40)

# padded matrix form for runtime-indexed access inside jitted code
_A_MAT = np.zeros((6, 6))
for _i, _row in enumerate(_A):
    _A_MAT[_i, : len(_row)] = _row

_MAX_STEPS = 100_000


@njit(cache=True, nogil=True)
def _dopri_linear2(a11, a12, a21, a22, b1, b2, y1, y2, t_end, rtol, atol):
    """Adaptive DP5(4) for one affine 2-state system y' = A y + b."""
    t = 0.0
    h = min(1e-2, t_end) if t_end > 0 else 0.0
    e1 = _B5[0] - _B4[0]
    e3 = _B5[2] - _B4[2]
    e4 = _B5[3] - _B4[3]
    e5 = _B5[4] - _B4[4]
    e6 = _B5[5] - _B4[5]
    e7 = _B5[6] - _B4[6]
    for _ in range(_MAX_STEPS):
        if t >= t_end:
            return y1, y2, True
        if t + h > t_end:
            h = t_end - t
        # stage derivatives
        k11 = a11 * y1 + a12 * y2 + b1
        k12 = a21 * y1 + a22 * y2 + b2
        u1 = y1 + h * _A[0][0] * k11
        u2 = y2 + h * _A[0][0] * k12
        k21 = a11 * u1 + a12 * u2 + b1
        k22 = a21 * u1 + a22 * u2 + b2
        u1 = y1 + h * (_A[1][0] * k11 + _A[1][1] * k21)
        u2 = y2 + h * (_A[1][0] * k12 + _A[1][1] * k22)
        k31 = a11 * u1 + a12 * u2 + b1
        k32 = a21 * u1 + a22 * u2 + b2
        u1 = y1 + h * (_A[2][0] * k11 + _A[2][1] * k21 + _A[2][2] * k31)
        u2 = y2 + h * (_A[2][0] * k12 + _A[2][1] * k22 + _A[2][2] * k32)
        k41 = a11 * u1 + a12 * u2 + b1
        k42 = a21 * u1 + a22 * u2 + b2
        u1 = y1 + h * (_A[3][0] * k11 + _A[3][1] * k21 + _A[3][2] * k31 + _A[3][3] * k41)
        u2 = y2 + h * (_A[3][0] * k12 + _A[3][1] * k22 + _A[3][2] * k32 + _A[3][3] * k42)
        k51 = a11 * u1 + a12 * u2 + b1
        k52 = a21 * u1 + a22 * u2 + b2
        u1 = y1 + h * (_A[4][0] * k11 + _A[4][1] * k21 + _A[4][2] * k31 + _A[4][3] * k41 + _A[4][4] * k51)
        u2 = y2 + h * (_A[4][0] * k12 + _A[4][1] * k22 + _A[4][2] * k32 + _A[4][3] * k42 + _A[4][4] * k52)
        k61 = a11 * u1 + a12 * u2 + b1
        k62 = a21 * u1 + a22 * u2 + b2
        v1 = y1 + h * (_A[5][0] * k11 + _A[5][2] * k31 + _A[5][3] * k41 + _A[5][4] * k51 + _A[5][5] * k61)
        v2 = y2 + h * (_A[5][0] * k12 + _A[5][2] * k32 + _A[5][3] * k42 + _A[5][4] * k52 + _A[5][5] * k62)
        k71 = a11 * v1 + a12 * v2 + b1
        k72 = a21 * v1 + a22 * v2 + b2
        err1 = h * (e1 * k11 + e3 * k31 + e4 * k41 + e5 * k51 + e6 * k61 + e7 * k71)
        err2 = h * (e1 * k12 + e3 * k32 + e4 * k42 + e5 * k52 + e6 * k62 + e7 * k72)
        s1 = atol + rtol * max(abs(y1), abs(v1))
        s2 = atol + rtol * max(abs(y2), abs(v2))
        err = np.sqrt(0.5 * ((err1 / s1) ** 2 + (err2 / s2) ** 2))
        if not np.isfinite(err):
            return y1, y2, False
        if err <= 1.0:
            t += h
            y1, y2 = v1, v2
        fac = 0.9 * (err + 1e-300) ** (-0.2)
        if fac < 0.2:
            fac = 0.2
        elif fac > 5.0:
            fac = 5.0
        h *= fac
        if h < 1e-14 * max(t_end, 1.0):
            return y1, y2, False
    return y1, y2, False


@njit(cache=True, nogil=True)
def growth_solve_batch(params, L, t_end, rtol, atol, dp_uses_R):
    """Solve the receptor/ligand system for each parameter row.

    params rows are (R_T, k1, k_m1, k_deg, k_deg_star); returns (B, 2) array
    of (R(t_end), P(t_end)) and a boolean success flag per row. Initial state
    is the ligand-free equilibrium R(0) = R_T, P(0) = 0.
    """
    n = params.shape[0]
    out = np.empty((n, 2))
    ok = np.empty(n, dtype=np.bool_)
    for i in range(n):
        rt, k1, km1, kdeg, kdegs = params[i, 0], params[i, 1], params[i, 2], params[i, 3], params[i, 4]
        a11 = -(k1 * L[i] + kdeg)
        a12 = km1
        b1 = rt * kdeg
        a22 = -km1
        b2 = 0.0
        if dp_uses_R:
            a21 = k1 * L[i] - kdegs
            a22p = a22
        else:
            a21 = k1 * L[i]
            a22p = a22 - kdegs
        y1, y2, good = _dopri_linear2(a11, a12, a21, a22p, b1, b2, rt, 0.0, t_end, rtol, atol)
        out[i, 0] = y1
        out[i, 1] = y2
        ok[i] = good and np.isfinite(y1) and np.isfinite(y2)
    return out, ok


@njit(cache=True, nogil=True)
def growth_expm_batch(params, L, t_end, dp_uses_R):
    """Exact solution of the affine growth system via the closed-form 2x2
    matrix exponential: y(t) = y* + e^{At} (y0 - y*), y* = -A^{-1} b."""
    n = params.shape[0]
    out = np.empty((n, 2))
    ok = np.empty(n, dtype=np.bool_)
    for i in range(n):
        rt, k1, km1, kdeg, kdegs = params[i, 0], params[i, 1], params[i, 2], params[i, 3], params[i, 4]
        a11 = -(k1 * L[i] + kdeg)
        a12 = km1
        b1 = rt * kdeg
        if dp_uses_R:
            a21 = k1 * L[i] - kdegs
            a22 = -km1
        else:
            a21 = k1 * L[i]
            a22 = -(km1 + kdegs)
        det = a11 * a22 - a12 * a21
        if det == 0.0:
            out[i, 0] = np.nan
            out[i, 1] = np.nan
            ok[i] = False
            continue
        # steady state
        ys1 = -(a22 * b1) / det
        ys2 = (a21 * b1) / det
        d1 = rt - ys1
        d2 = -ys2
        m = 0.5 * (a11 + a22)
        q2 = m * m - det
        t = t_end
        # ec = e^{mt} cosh(qt), es = e^{mt} sinh(qt)/q, combined to avoid
        # cosh overflow for stiff rows
        if q2 > 1e-12:
            q = np.sqrt(q2)
            ep = np.exp((m + q) * t)
            en = np.exp((m - q) * t)
            ec = 0.5 * (ep + en)
            es = (ep - en) / (2.0 * q)
        elif q2 < -1e-12:
            q = np.sqrt(-q2)
            emt = np.exp(m * t)
            ec = emt * np.cos(q * t)
            es = emt * np.sin(q * t) / q
        else:
            emt = np.exp(m * t)
            ec = emt * (1.0 + 0.5 * q2 * t * t)
            es = emt * t * (1.0 + q2 * t * t / 6.0)
        e11 = ec + es * (a11 - m)
        e12 = es * a12
        e21 = es * a21
        e22 = ec + es * (a22 - m)
        y1 = ys1 + e11 * d1 + e12 * d2
        y2 = ys2 + e21 * d1 + e22 * d2
        out[i, 0] = y1
        out[i, 1] = y2
        ok[i] = np.isfinite(y1) and np.isfinite(y2)
    return out, ok


@njit(cache=True, nogil=True)
def intern_solve_batch(lam, beta, p, t_end, rtol, atol):
    """Solve the receptor internalisation system per cell.

    Rows carry (lambda_i, beta_i) and an end time each; ``p`` is shared.
    States are (T, S, E, F) with antibody-free-equilibrium initial condition
    T(0) = lam/(lam+beta), S(0) = beta/(lam+beta), E(0) = F(0) = 0.
    """
    n = lam.shape[0]
    out = np.empty((n, 4))
    ok = np.empty(n, dtype=np.bool_)
    e1 = _B5[0] - _B4[0]
    e3 = _B5[2] - _B4[2]
    e4 = _B5[3] - _B4[3]
    e5 = _B5[4] - _B4[4]
    e6 = _B5[5] - _B4[5]
    e7 = _B5[6] - _B4[6]
    for i in range(n):
        lm, bt, te = lam[i], beta[i], t_end[i]
        tot = lm + bt
        yT = lm / tot
        yS = bt / tot
        yE = 0.0
        yF = 0.0
        t = 0.0
        h = min(1.0, te) if te > 0 else 0.0
        good = True
        steps = 0
        # k-stage buffers (4 states x 7 stages)
        kT = np.empty(7)
        kS = np.empty(7)
        kE = np.empty(7)
        kF = np.empty(7)
        while t < te:
            steps += 1
            if steps > _MAX_STEPS:
                good = False
                break
            if t + h > te:
                h = te - t
            uT, uS, uE, uF = yT, yS, yE, yF
            for s in range(7):
                if s > 0:
                    uT, uS, uE, uF = yT, yS, yE, yF
                    for j in range(s):
                        a = _A_MAT[s - 1, j]
                        uT += h * a * kT[j]
                        uS += h * a * kS[j]
                        uE += h * a * kE[j]
                        uF += h * a * kF[j]
                kT[s] = -bt * uT
                kS[s] = bt * uT - lm * uS + p * bt * uE
                kE[s] = lm * uS - p * bt * uE
                kF[s] = p * bt * uE
            # 5th-order solution is stage-7 input state (FSAL layout)
            vT = yT + h * (_B5[0] * kT[0] + _B5[2] * kT[2] + _B5[3] * kT[3] + _B5[4] * kT[4] + _B5[5] * kT[5])
            vS = yS + h * (_B5[0] * kS[0] + _B5[2] * kS[2] + _B5[3] * kS[3] + _B5[4] * kS[4] + _B5[5] * kS[5])
            vE = yE + h * (_B5[0] * kE[0] + _B5[2] * kE[2] + _B5[3] * kE[3] + _B5[4] * kE[4] + _B5[5] * kE[5])
            vF = yF + h * (_B5[0] * kF[0] + _B5[2] * kF[2] + _B5[3] * kF[3] + _B5[4] * kF[4] + _B5[5] * kF[5])
            errT = h * (e1 * kT[0] + e3 * kT[2] + e4 * kT[3] + e5 * kT[4] + e6 * kT[5] + e7 * kT[6])
            errS = h * (e1 * kS[0] + e3 * kS[2] + e4 * kS[3] + e5 * kS[4] + e6 * kS[5] + e7 * kS[6])
            errE = h * (e1 * kE[0] + e3 * kE[2] + e4 * kE[3] + e5 * kE[4] + e6 * kE[5] + e7 * kE[6])
            errF = h * (e1 * kF[0] + e3 * kF[2] + e4 * kF[3] + e5 * kF[4] + e6 * kF[5] + e7 * kF[6])
            sT = atol + rtol * max(abs(yT), abs(vT))
            sS = atol + rtol * max(abs(yS), abs(vS))
            sE = atol + rtol * max(abs(yE), abs(vE))
            sF = atol + rtol * max(abs(yF), abs(vF))
            err = np.sqrt(0.25 * ((errT / sT) ** 2 + (errS / sS) ** 2 + (errE / sE) ** 2 + (errF / sF) ** 2))
            if not np.isfinite(err):
                good = False
                break
            if err <= 1.0:
                t += h
                yT, yS, yE, yF = vT, vS, vE, vF
            fac = 0.9 * (err + 1e-300) ** (-0.2)
            if fac < 0.2:
                fac = 0.2
            elif fac > 5.0:
                fac = 5.0
            h *= fac
            if h < 1e-14 * max(te, 1.0):
                good = False
                break
        out[i, 0] = yT
        out[i, 1] = yS
        out[i, 2] = yE
        out[i, 3] = yF
        ok[i] = good and np.isfinite(yT + yS + yE + yF)
    return out, ok
