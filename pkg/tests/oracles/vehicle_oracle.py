"""Independent recomputation of the frozen vehicle-model test values.

Evaluates the aerodynamic formulas directly from first principles, without
importing the package, and prints reference numbers at full precision.  The
expected values in tests/test_vehicle.py were frozen from this output.

Run:  python tests/oracles/vehicle_oracle.py
"""

import math

DEG = math.pi / 180.0

# Demonstrator constants, file units.
m, g, S, A, J_w, rho, n = 752.2, 9.81, 8.93, 2.83, 1100.0, 1.225, 4
a0, a1_deg, a2_deg, b0, b1_deg = 0.02, 0.004, 7.6e-5, 0.43, 0.11

a1 = a1_deg / DEG
a2 = a2_deg / DEG**2
b1 = b1_deg / DEG
lam = a1 / b1
S_star = S / (A * n)
kap_const = S_star * (a0 - lam * b0)


def kappa(alpha):
    return math.cos(alpha) + lam * math.sin(alpha) - kap_const


def f_exact(alpha, E, tau):
    """Normal force with thrust eliminated exactly through tau = T kappa."""
    T = tau / kappa(alpha)
    V = math.sqrt(E)
    V_e = math.sqrt(V * V + 2.0 * T / (rho * A * n))
    alpha_e = math.asin(V * math.sin(alpha) / V_e) if V_e > 0 else 0.0
    lift = 0.5 * rho * S * (b1 * alpha_e + b0) * V_e**2
    return T * math.sin(alpha) + lift


def main():
    print(f"lam           = {lam!r}")
    print(f"S_star        = {S_star!r}")
    print(f"kappa(0)      = {kappa(0.0)!r}")
    print(f"weight        = {m * g!r}")

    # effective velocity at hover, full thrust
    print(f"V_e(0, 8855)  = {math.sqrt(2.0 * 8855.0 / (rho * A * n))!r}")

    # effective alpha, V=10 V_e=20 alpha=pi/2
    print(f"alpha_e ex    = {math.asin(10.0 * 1.0 / 20.0)!r}")

    # lift at alpha_e=0, V_e=40
    print(f"L(0, 40)      = {0.5 * rho * S * b0 * 1600.0!r}")

    # virtual input for T=1000, alpha=0
    print(f"tau(1000, 0)  = {1000.0 * kappa(0.0)!r}")

    # f at alpha=0, E=100, tau=1000 (wake term sees T = tau/kappa(0))
    T = 1000.0 / kappa(0.0)
    print(f"f(0,100,1000) = {0.5 * rho * S * b0 * (100.0 + 2.0 * T / (rho * A * n))!r}")
    print(f"  cross-check = {f_exact(0.0, 100.0, 1000.0)!r}")

    # f at tau=0: alpha_e = alpha, no wake
    print(f"f(0.1,100,0)  = {0.5 * rho * S * (b1 * 0.1 + b0) * 100.0!r}")
    print(f"  cross-check = {f_exact(0.1, 100.0, 0.0)!r}")

    # f at alpha=0.2, E=100, tau=1000
    print(f"f(0.2,100,1e3)= {f_exact(0.2, 100.0, 1000.0)!r}")

    # one guess-propagation step: E=100 -> 100, tau=500, gamma=0, i_w=0.5,
    # zeta=0, M=10, delta=1
    E_k, E_k1, tau, gamma, i_w, zeta, M, delta = 100.0, 100.0, 500.0, 0.0, 0.5, 0.0, 10.0, 1.0
    f = f_exact(i_w - gamma, E_k, tau)
    gamma1 = gamma + delta / (m * E_k) * (f - m * g * math.cos(gamma))
    i_w1 = i_w + zeta * delta
    zeta1 = zeta * (1.0 - (E_k1 - E_k) / (2.0 * E_k)) + M * delta / (J_w * E_k)
    print(f"step f        = {f!r}")
    print(f"step gamma1   = {gamma1!r}")
    print(f"step i_w1     = {i_w1!r}")
    print(f"step zeta1    = {zeta1!r}")

    # same step with 10x substepping of the same recursion (consistency, not
    # equality: the recursion is explicit Euler, substeps shift the result)
    gs, iws, zs = gamma, i_w, zeta
    dsub = delta / 10.0
    for j in range(10):
        Ea = E_k + (E_k1 - E_k) * j / 10.0
        Eb = E_k + (E_k1 - E_k) * (j + 1) / 10.0
        fs = f_exact(iws - gs, Ea, tau)
        gs = gs + dsub / (m * Ea) * (fs - m * g * math.cos(gs))
        iws, zs = iws + zs * dsub, zs * (1.0 - (Eb - Ea) / (2.0 * Ea)) + M * dsub / (J_w * Ea)
    print(f"substep gamma = {gs!r}")
    print(f"substep i_w   = {iws!r}")
    print(f"substep zeta  = {zs!r}")


if __name__ == "__main__":
    main()
