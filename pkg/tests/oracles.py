"""Independent reference implementations used only by the tests.

None of these share code with the package: inverses come from Gauss-Jordan
elimination or LAPACK, Kalman steps from numpy, RK4 from a plain loop.
"""
import numpy as np


def gauss_jordan_inverse(a):
    """Partial-pivoting Gauss-Jordan, independent of the adjugate code path."""
    n = len(a)
    m = [list(map(float, row)) + [1.0 if i == j else 0.0 for j in range(n)] for i, row in enumerate(a)]
    for col in range(n):
        piv = max(range(col, n), key=lambda r: abs(m[r][col]))
        m[col], m[piv] = m[piv], m[col]
        p = m[col][col]
        m[col] = [x / p for x in m[col]]
        for r in range(n):
            if r != col:
                f = m[r][col]
                m[r] = [x - f * y for x, y in zip(m[r], m[col])]
    return np.array([row[n:] for row in m])


def well_conditioned(n, rng):
    """Condition number below 10 by construction (singular values in [1, 10])."""
    u, _ = np.linalg.qr(rng.normal(size=(n, n)))
    v, _ = np.linalg.qr(rng.normal(size=(n, n)))
    return u @ np.diag(rng.uniform(1, 10, n)) @ v.T


def numpy_information_step(model, x, P, z):
    """Dense oracle using numpy's LAPACK inverse."""
    inv = np.linalg.inv
    xp = model.F @ x
    Pp = model.F @ P @ model.F.T + model.Q
    info = inv(inv(Pp) + model.H.T @ inv(model.R) @ model.H)
    return xp + info @ model.H.T @ inv(model.R) @ (z - model.H @ xp), info


def numpy_gain_step(model, x, P, z):
    """Textbook gain form with the Joseph covariance update."""
    xp = model.F @ x
    Pp = model.F @ P @ model.F.T + model.Q
    S = model.H @ Pp @ model.H.T + model.R
    K = np.linalg.solve(S, model.H @ Pp).T
    I_KH = np.eye(model.n) - K @ model.H
    return xp + K @ (z - model.H @ xp), I_KH @ Pp @ I_KH.T + K @ model.R @ K.T


def numpy_rk4(f, x0, h, steps):
    x = np.array(x0, dtype=float)
    out = [x.copy()]
    for s in range(steps):
        t = s * h
        k1 = f(x, t)
        k2 = f(x + 0.5 * h * k1, t + 0.5 * h)
        k3 = f(x + 0.5 * h * k2, t + 0.5 * h)
        k4 = f(x + h * k3, t + h)
        x = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out.append(x.copy())
    return np.array(out)
