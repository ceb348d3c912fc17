"""Independent plain-arithmetic oracle for values frozen into the unit tests.

Standard DH: A_i = Rot_z(theta) Trans_z(d) Trans_x(a) Rot_x(alpha).
Run: python3 tests/oracles/fk_oracle.py
"""
import math

import numpy as np

A = [0.0, -0.6127, -0.57155, 0.0, 0.0, 0.0]
D = [0.1807, 0.0, 0.0, 0.17415, 0.11985, 0.11655]
ALPHA = [math.pi / 2, 0.0, 0.0, math.pi / 2, -math.pi / 2, 0.0]


def rot_z(t):
    c, s = math.cos(t), math.sin(t)
    return np.array([[c, -s, 0, 0], [s, c, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1.0]])


def rot_x(t):
    c, s = math.cos(t), math.sin(t)
    return np.array([[1, 0, 0, 0], [0, c, -s, 0], [0, s, c, 0], [0, 0, 0, 1.0]])


def trans(x, y, z):
    m = np.eye(4)
    m[:3, 3] = [x, y, z]
    return m


def fk(q):
    h = np.eye(4)
    for i in range(6):
        h = h @ rot_z(q[i]) @ trans(0, 0, D[i]) @ trans(A[i], 0, 0) @ rot_x(ALPHA[i])
    return h


def acos_ext(x, delta):
    b = 1 - delta
    slope = -1 / math.sqrt(1 - b * b)
    if x >= b:
        return math.acos(b) + slope * (x - b)
    if x <= -b:
        return math.acos(-b) + slope * (x + b)
    return math.acos(x)


if __name__ == "__main__":
    np.set_printoptions(precision=17)
    for q in ([0.0] * 6, [0.3, -1.2, 1.5, -0.4, 1.1, 0.7], [-2.0, -0.5, -1.0, 2.5, -0.6, 3.0]):
        print("q =", q)
        for row in fk(q)[:3]:
            print("  ", ", ".join(repr(float(v)) for v in row))
    print("acos_ext(2, 1e-4) =", repr(acos_ext(2.0, 1e-4)))
    print("slope(1e-4) =", repr(-1 / math.sqrt(1 - (1 - 1e-4) ** 2)))
    print("acos_ext(-1.5, 1e-4) =", repr(acos_ext(-1.5, 1e-4)))


def max_planar_radius(samples=1_000_000, seed=0):
    """Vectorised Monte-Carlo maximum of the flange's distance from the joint-1 axis."""
    rng = np.random.default_rng(seed)
    q = rng.uniform(-math.pi, math.pi, size=(samples, 6))
    n = samples
    h = np.broadcast_to(np.eye(4), (n, 4, 4)).copy()
    for i in range(6):
        c, s = np.cos(q[:, i]), np.sin(q[:, i])
        ca, sa = round(math.cos(ALPHA[i]), 15), round(math.sin(ALPHA[i]), 15)
        a = np.zeros((n, 4, 4))
        a[:, 0, 0], a[:, 0, 1], a[:, 0, 2], a[:, 0, 3] = c, -s * ca, s * sa, A[i] * c
        a[:, 1, 0], a[:, 1, 1], a[:, 1, 2], a[:, 1, 3] = s, c * ca, -c * sa, A[i] * s
        a[:, 2, 1], a[:, 2, 2], a[:, 2, 3] = sa, ca, D[i]
        a[:, 3, 3] = 1.0
        h = h @ a
    return float(np.max(np.hypot(h[:, 0, 3], h[:, 1, 3])))


if __name__ == "__main__":
    print("max planar radius (1e6 samples) =", max_planar_radius())
