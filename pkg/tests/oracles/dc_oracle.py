"""Closed-form oracle for the trace-minimizing convex-split SDP.

For H_g >= 0, H_g - H_f >= 0, min tr H_g, the optimum is the positive part
of H_f's eigendecomposition:

  * feasible: clipping negative eigenvalues to zero keeps the matrix PSD,
    and H_g - H_f = sum of (-lambda_i) v_i v_i' over negative eigenvalues,
    which is PSD;
  * optimal: X - H_f >= 0 forces lambda_i(X) >= lambda_i(H_f) pairwise
    (eigenvalue monotonicity), and X >= 0 forces lambda_i(X) >= 0, so
    tr X >= sum_i max(lambda_i(H_f), 0), which the clipped matrix attains.

This file recomputes the frozen expected values in tests/test_dc.py without
importing the package.  Run:  python3 tests/oracles/dc_oracle.py
"""

import numpy as np


def gram(p):
    """Uniform anti-diagonal spread of coefficients p_0..p_2n, (n+1)^2."""
    two_n = len(p) - 1
    assert two_n % 2 == 0
    n = two_n // 2
    P = np.zeros((n + 1, n + 1))
    for m, pm in enumerate(p):
        count = m + 1 if m <= n else 2 * n + 1 - m
        for i in range(max(0, m - n), min(n, m) + 1):
            P[i, m - i] = pm / count
    return P


def diff_matrix(n):
    D = np.zeros((n + 1, n + 1))
    for i in range(1, n + 1):
        D[i, i - 1] = i
    return D


def hessian_form(P):
    n = P.shape[0] - 1
    D = diff_matrix(n)
    return D.T @ D.T @ P + P @ D @ D + 2.0 * D.T @ P @ D


def psd_part(H):
    w, V = np.linalg.eigh(H)
    return (V * np.clip(w, 0.0, None)) @ V.T, float(np.sum(np.clip(w, 0.0, None)))


def quad_form_coeffs(H):
    """Coefficients of y' H y with y = [1, a, ..., a^n]."""
    n = H.shape[0] - 1
    out = np.zeros(2 * n + 1)
    for i in range(n + 1):
        for j in range(n + 1):
            out[i + j] += H[i, j]
    return out


def double_integral(c):
    """Integrate twice with zero constant and linear terms."""
    out = np.zeros(len(c) + 2)
    for m, cm in enumerate(c):
        out[m + 2] = cm / ((m + 1) * (m + 2))
    return out


def split(p):
    H_f = hessian_form(gram(p))
    H_g, trace = psd_part(H_f)
    h = double_integral(quad_form_coeffs(H_g - H_f))
    g = np.concatenate((p, np.zeros(len(h) - len(p)))) + h
    return trace, H_g, g, h


def main():
    cases = {
        "alpha^2": [0.0, 0.0, 1.0],
        "-alpha^2": [0.0, 0.0, -1.0],
        "alpha^4": [0.0, 0.0, 0.0, 0.0, 1.0],
        "alpha^4 - alpha^2": [0.0, 0.0, -1.0, 0.0, 1.0],
    }
    for name, p in cases.items():
        trace, H_g, g, h = split(np.array(p))
        print(f"== {name}")
        print(f"trace = {trace!r}")
        print("H_g =")
        for row in H_g:
            print("   ", " ".join(f"{v: .12f}" for v in row))
        print(f"g = {[repr(v) for v in g]}")
        print(f"h = {[repr(v) for v in h]}")


if __name__ == "__main__":
    main()
