"""Independent reference values for the tube-stage tests.

Raw-formula recomputation, no package imports.  Run directly; paste the
printed values into test_tube.py.
"""

import math

import numpy as np

M = 752.2
G = 9.81
S = 8.93
A = 2.83
RHO = 1.225
NPROP = 4
A0 = 0.02
B0 = 0.43
A1_DEG = 0.004
B1_DEG = 0.11
B1 = B1_DEG * 180.0 / math.pi
J_W = 1100.0
MG = M * G
LAM = A1_DEG / B1_DEG
S_STAR = S / (A * NPROP)
HALF_RHO_S = 0.5 * RHO * S
RHO_A_N = RHO * A * NPROP
ALPHA_LO, ALPHA_HI = -1.31, 1.5623


def f_force(alpha, E, tau):
    kap = math.cos(alpha) + LAM * math.sin(alpha) - S_STAR * (A0 - LAM * B0)
    T = tau / kap
    V = math.sqrt(E)
    Ve = math.sqrt(E + 2.0 * T / RHO_A_N)
    ae = math.asin(V / Ve * math.sin(alpha)) if Ve > 0 else alpha
    lift = HALF_RHO_S * (B1 * ae + B0) * Ve * Ve
    return T * math.sin(alpha) + lift


def balance(E, tau, target):
    grid = np.linspace(ALPHA_LO, ALPHA_HI, 2001)
    vals = np.array([f_force(a, E, tau) - target for a in grid])
    idx = np.nonzero(np.diff(np.sign(vals)) != 0)[0]
    lo, hi = grid[idx[0]], grid[idx[0] + 1]
    g_lo = vals[idx[0]]
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        g_mid = f_force(mid, E, tau) - target
        if (g_mid > 0) == (g_lo > 0):
            lo, g_lo = mid, g_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def riccati_stationary(E, delta, q_i, q_zeta, r, iters=2000):
    Q = np.diag([q_i, q_zeta])
    A_mat = np.array([[1.0, delta], [0.0, 1.0]])  # constant E
    B = np.array([[0.0], [delta / (J_W * E)]])
    P = Q.copy()
    for _ in range(iters):
        Sc = (r + B.T @ P @ B).item()
        K = (B.T @ P @ A_mat) / Sc
        P = Q + A_mat.T @ P @ A_mat - A_mat.T @ P @ B @ K
    return -K[0, 0], -K[0, 1]


if __name__ == "__main__":
    print("hover balance alpha (E=0.04, tau=242.9, target=mg):",
          repr(balance(0.04, 242.9, MG)))
    print("cruise balance alpha (E=1600, tau=300, target=mg):",
          repr(balance(1600.0, 300.0, MG)))
    print("glide balance alpha (E=400, tau=0, target=mg):",
          repr(balance(400.0, 0.0, MG)))
    print("closed-form glide alpha:",
          repr((MG / (HALF_RHO_S * 400.0) - B0) / B1))
    ki, kz = riccati_stationary(100.0, 1.0, 1.0, 1.0, 1e-2)
    print("stationary K_i (E=100, delta=1):", repr(ki))
    print("stationary K_zeta (E=100, delta=1):", repr(kz))
