"""Compiled passes of the iterative LQR tracker.

Everything here works on plain float64 arrays so numba can compile it; the
solver loop, warm start and bookkeeping stay in ``controller``. The error
state is [dp, dv, dtheta] with the attitude error right-multiplicative, the
input is [collective, wx, wy, wz].
"""
import math

import numpy as np
from numba import njit

from app.services.geometry import GRAVITY


@njit(cache=True)
def _qmul(q, r):
    out = np.empty(4)
    out[0] = q[0] * r[0] - q[1] * r[1] - q[2] * r[2] - q[3] * r[3]
    out[1] = q[0] * r[1] + q[1] * r[0] + q[2] * r[3] - q[3] * r[2]
    out[2] = q[0] * r[2] - q[1] * r[3] + q[2] * r[0] + q[3] * r[1]
    out[3] = q[0] * r[3] + q[1] * r[2] - q[2] * r[1] + q[3] * r[0]
    return out


@njit(cache=True)
def _qconj(q):
    out = np.empty(4)
    out[0] = q[0]
    out[1] = -q[1]
    out[2] = -q[2]
    out[3] = -q[3]
    return out


@njit(cache=True)
def _qexp(w):
    out = np.empty(4)
    angle = math.sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2])
    if angle < 1e-12:
        out[0] = 1.0
        out[1] = 0.5 * w[0]
        out[2] = 0.5 * w[1]
        out[3] = 0.5 * w[2]
        return out / math.sqrt(out[0] ** 2 + out[1] ** 2 + out[2] ** 2 + out[3] ** 2)
    s = math.sin(0.5 * angle) / angle
    out[0] = math.cos(0.5 * angle)
    out[1] = s * w[0]
    out[2] = s * w[1]
    out[3] = s * w[2]
    return out


@njit(cache=True)
def _qlog(q):
    sign = -1.0 if q[0] < 0.0 else 1.0
    w = sign * q[0]
    out = np.empty(3)
    out[0] = sign * q[1]
    out[1] = sign * q[2]
    out[2] = sign * q[3]
    v_norm = math.sqrt(out[0] ** 2 + out[1] ** 2 + out[2] ** 2)
    if v_norm < 1e-12:
        return 2.0 * out / w
    return 2.0 * math.atan2(v_norm, w) * out / v_norm


@njit(cache=True)
def _rotmat(q):
    w, x, y, z = q[0], q[1], q[2], q[3]
    R = np.empty((3, 3))
    R[0, 0] = 1.0 - 2.0 * (y * y + z * z)
    R[0, 1] = 2.0 * (x * y - w * z)
    R[0, 2] = 2.0 * (x * z + w * y)
    R[1, 0] = 2.0 * (x * y + w * z)
    R[1, 1] = 1.0 - 2.0 * (x * x + z * z)
    R[1, 2] = 2.0 * (y * z - w * x)
    R[2, 0] = 2.0 * (x * z - w * y)
    R[2, 1] = 2.0 * (y * z + w * x)
    R[2, 2] = 1.0 - 2.0 * (x * x + y * y)
    return R


@njit(cache=True)
def _skew(v):
    S = np.zeros((3, 3))
    S[0, 1] = -v[2]
    S[0, 2] = v[1]
    S[1, 0] = v[2]
    S[1, 2] = -v[0]
    S[2, 0] = -v[1]
    S[2, 1] = v[0]
    return S


@njit(cache=True)
def _right_jacobian(phi):
    theta = math.sqrt(phi[0] ** 2 + phi[1] ** 2 + phi[2] ** 2)
    K = _skew(phi)
    KK = K @ K
    if theta < 1e-6:
        return np.eye(3) - 0.5 * K + KK / 6.0
    return np.eye(3) - (1.0 - math.cos(theta)) / theta ** 2 * K + (theta - math.sin(theta)) / theta ** 3 * KK


@njit(cache=True)
def dynamics(p, v, q, u, h, mass):
    """One node of the nominal model: rates held for ``h``, thrust along the mid-step body z."""
    omega = u[1:]
    R_mid = _rotmat(_qmul(q, _qexp(omega * 0.5 * h)))
    a = (u[0] / mass) * R_mid[:, 2]
    a[2] -= GRAVITY
    return p + v * h + 0.5 * a * h * h, v + a * h, _qmul(q, _qexp(omega * h))


@njit(cache=True)
def linearize(q, u, h, mass):
    omega = u[1:]
    c = u[0]
    half = omega * 0.5 * h
    E_half = _rotmat(_qexp(half))
    R_mid = _rotmat(q) @ E_half
    z_mid = R_mid[:, 2].copy()
    e_z = np.array([0.0, 0.0, 1.0])
    dz = -(R_mid @ _skew(e_z))          # d(thrust direction) / d(xi)
    dz_dtheta = (c / mass) * (dz @ np.ascontiguousarray(E_half.T))
    dz_domega = (c / mass) * (dz @ _right_jacobian(half)) * (0.5 * h)

    A = np.eye(9)
    for i in range(3):
        A[i, 3 + i] = h
    A[0:3, 6:9] = 0.5 * h * h * dz_dtheta
    A[3:6, 6:9] = h * dz_dtheta
    A[6:9, 6:9] = _rotmat(_qexp(omega * h)).T

    B = np.zeros((9, 4))
    B[0:3, 0] = 0.5 * h * h * z_mid / mass
    B[3:6, 0] = h * z_mid / mass
    B[0:3, 1:4] = 0.5 * h * h * dz_domega
    B[3:6, 1:4] = h * dz_domega
    B[6:9, 1:4] = _right_jacobian(omega * h) * h
    return A, B


@njit(cache=True)
def rollout(p0, v0, q0, inputs, h, mass):
    n = inputs.shape[0]
    P = np.zeros((n + 1, 3))
    V = np.zeros((n + 1, 3))
    Q = np.zeros((n + 1, 4))
    P[0] = p0
    V[0] = v0
    Q[0] = q0
    for k in range(n):
        p, v, q = dynamics(P[k], V[k], Q[k], inputs[k], h, mass)
        P[k + 1] = p
        V[k + 1] = v
        Q[k + 1] = q
    return P, V, Q


@njit(cache=True)
def tracking_errors(P, V, Q, ref_p, ref_v, ref_q):
    e = np.zeros((P.shape[0], 9))
    for k in range(P.shape[0]):
        e[k, 0:3] = P[k] - ref_p[k]
        e[k, 3:6] = V[k] - ref_v[k]
        e[k, 6:9] = _qlog(_qmul(_qconj(ref_q[k]), Q[k]))
    return e


@njit(cache=True)
def cost(e, du, Qw, Qw_terminal, Rw):
    n = du.shape[0]
    total = 0.0
    for k in range(n):
        total += e[k] @ (Qw @ e[k]) + du[k] @ (Rw @ du[k])
    total += e[n] @ (Qw_terminal @ e[n])
    return 0.5 * total


@njit(cache=True)
def backward_pass(Q, inputs, e, u_ref, Qw, Qw_terminal, Rw, h, mass, mu):
    """Feedback gains K (N, 4, 9), feedforward d (N, 4) and the expected cost decrease."""
    n = inputs.shape[0]
    Ks = np.zeros((n, 4, 9))
    ds = np.zeros((n, 4))
    Vxx = Qw_terminal.copy()
    s = Qw_terminal @ e[n]
    expected = 0.0
    damping = mu * np.eye(4)
    for k in range(n - 1, -1, -1):
        A, B = linearize(Q[k], inputs[k], h, mass)
        At = np.ascontiguousarray(A.T)
        Bt = np.ascontiguousarray(B.T)
        Qx = Qw @ e[k] + At @ s
        Qu = Rw @ (inputs[k] - u_ref[k]) + Bt @ s
        Qxx = Qw + At @ Vxx @ A
        Quu = Rw + Bt @ Vxx @ B + damping
        Qux = Bt @ Vxx @ A
        K = -np.linalg.solve(Quu, Qux)
        d = -np.linalg.solve(Quu, Qu)
        Kt = np.ascontiguousarray(K.T)
        Quxt = np.ascontiguousarray(Qux.T)
        s = Qx + Kt @ (Quu @ d) + Kt @ Qu + Quxt @ d
        Vxx = Qxx + Kt @ Quu @ K + Kt @ Qux + Quxt @ K
        Vxx = 0.5 * (Vxx + np.ascontiguousarray(Vxx.T))
        expected += d @ Qu
        Ks[k] = K
        ds[k] = d
    return Ks, ds, -expected


@njit(cache=True)
def forward_pass(P, V, Q, inputs, Ks, ds, alpha, lower, upper, h, mass):
    """Closed-loop rollout of the updated policy; inputs are clamped to the bounds."""
    n = inputs.shape[0]
    new_inputs = np.zeros_like(inputs)
    Pn = np.zeros_like(P)
    Vn = np.zeros_like(V)
    Qn = np.zeros_like(Q)
    Pn[0] = P[0]
    Vn[0] = V[0]
    Qn[0] = Q[0]
    dx = np.zeros(9)
    for k in range(n):
        dx[0:3] = Pn[k] - P[k]
        dx[3:6] = Vn[k] - V[k]
        dx[6:9] = _qlog(_qmul(_qconj(Q[k]), Qn[k]))
        u = inputs[k] + alpha * ds[k] + Ks[k] @ dx
        for j in range(4):
            u[j] = min(max(u[j], lower[j]), upper[j])
        new_inputs[k] = u
        p, v, q = dynamics(Pn[k], Vn[k], Qn[k], u, h, mass)
        Pn[k + 1] = p
        Vn[k + 1] = v
        Qn[k + 1] = q
    return Pn, Vn, Qn, new_inputs
