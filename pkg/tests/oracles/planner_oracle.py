"""Independent recomputation of planner-level expected values.

Raw formulas only, no package imports.  Run and paste the printed numbers
into test_planner.py as frozen constants.
"""

import math

DEG = math.pi / 180.0
RHO = 1.225
S_W = 8.93
A_DISK = 2.83
N_PROP = 4
A0 = 0.02
A1 = 0.004 / DEG
B0 = 0.43
B1 = 0.11 / DEG

# time mapping on a nonuniform grid: t_k = sum_{j<k} delta_j / V_j
V = [3.0, 7.5, 12.0, 26.0, 33.5]
delta = [2.0, 5.0, 9.0, 4.0]
t = [0.0]
for j in range(len(delta)):
    t.append(t[-1] + delta[j] / V[j])
print("map_to_time nonuniform t:", ", ".join(repr(v) for v in t))

# thrust recovered from the virtual input at alpha = 0
lam = A1 / B1
s_star = S_W / (A_DISK * N_PROP)
kappa0 = 1.0 - s_star * (A0 - lam * B0)
print("kappa0:", repr(kappa0))
print("T at tau=1000, alpha=0:", repr(1000.0 / kappa0))

# effective flow chain at V=30 m/s, T=2000 N, alpha=0.1 rad
V_e = math.sqrt(30.0**2 + 2.0 * 2000.0 / (RHO * A_DISK * N_PROP))
alpha_e = math.asin(30.0 * math.sin(0.1) / V_e)
print("V_e:", repr(V_e))
print("alpha_e:", repr(alpha_e))
