"""Order of the transport integrator against a matrix-exponential oracle.

Along a straight path of a constant connection, transport is ``expm(A L) y0``.

    python3 scripts/rk4_order.py
"""
import numpy as np
from scipy.linalg import expm

from microkin.geometry import AffineConnection
from microkin.holonomy import parallel_transport


def main():
    A = np.array([[0.0, -2.0, 0.0], [2.0, 0.0, 0.5], [0.0, -0.5, 0.0]])
    c1 = np.zeros((3, 3, 3))
    c1[..., 0] = A
    conn = AffineConnection(np.zeros((3, 3)), c1)
    y0 = np.array([1.0, 0.0, 0.0])
    L = 2.0
    exact = expm(A * L) @ y0
    steps = np.array([8, 16, 32, 64, 128, 256])
    errs = np.array([np.abs(parallel_transport(conn, [[0, 0, 0], [L, 0, 0]], y0, s) - exact).max() for s in steps])
    for s, e in zip(steps, errs):
        print(f"steps {s:4d}  error {e:.3e}")
    keep = errs > 1e-13
    slope = np.polyfit(np.log(steps[keep]), np.log(errs[keep]), 1)[0]
    print(f"log-log slope {slope:.3f}")


if __name__ == "__main__":
    main()
