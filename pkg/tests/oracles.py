"""Independent reference computations used by the tests.

Nothing here imports the package's own assembly code: the joint-chain
generator is enumerated event by event, LMI blocks are written out
entry by entry with numpy, and delay equations are solved in closed form.
"""

import numpy as np

PI_REF = np.array([[-5.0, 5.0], [3.0, -3.0]])
S_TILDE = np.array([[-5, 0, 5, 0], [3, -8, 0, 5], [3, 0, -6, 3], [0, 3, 0, -3]], dtype=float)
K_REF = [np.array([[-0.7423, -0.4074]]), np.array([[-0.4397, -0.2309]])]


def joint_generator(Pi, G):
    """Enumerate the events of the (true, observed) pair.

    A true-mode jump i -> i2 leaves the observation alone; an observation
    event moves the observation onto the current true mode, and only when
    they differ.
    """
    N = len(Pi)
    states = [(i, j) for i in range(N) for j in range(N)]
    pos = {s: k for k, s in enumerate(states)}
    out = np.zeros((N * N, N * N))
    for (i, j), k in pos.items():
        for i2 in range(N):
            if i2 != i:
                out[k, pos[(i2, j)]] += Pi[i][i2]
        if j != i:
            out[k, pos[(i, i)]] += G[j][i]
        out[k, k] = -sum(out[k, c] for c in range(N * N) if c != k)
    return out


def stationary(Q):
    """Null vector of Q^T via SVD, normalized."""
    _, _, vt = np.linalg.svd(np.asarray(Q, dtype=float).T)
    p = vt[-1]
    return p / p.sum()


def delayed_decay_exact(t):
    """x' = -x(t-1), phi = 1: method-of-steps polynomials on [0, 2]."""
    t = np.asarray(t, dtype=float)
    return np.where(t <= 1.0, 1.0 - t, 0.5 * t ** 2 - 2.0 * t + 1.5)


def h2_block_dense(A, B, C, K, P, kappa_row, Pall, Q, tau_plus):
    """Fixed-gain H2 block for one augmented state, assembled by hand."""
    n = A.shape[0]
    coupling = np.zeros((n, n))
    for w, Pk in zip(kappa_row, Pall):
        coupling += w * Pk
    top = A.T @ P + P @ A + Q + coupling + C.T @ C
    off = P @ B @ K
    M = np.zeros((2 * n, 2 * n))
    M[:n, :n] = top
    M[:n, n:] = off
    M[n:, :n] = off.T
    M[n:, n:] = -(1 - tau_plus) * Q
    return M


def max_eig(M):
    M = np.asarray(M, dtype=float)
    return float(np.linalg.eigvalsh(0.5 * (M + M.T)).max())
