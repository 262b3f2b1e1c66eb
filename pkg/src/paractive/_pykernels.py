"""Pure-numpy RBF kernels; reference semantics for the compiled core.

Every output entry is computed from its own pair of vectors only, so a
result never depends on how many other rows were evaluated alongside it.
"""
import numpy as np

# Caps the temporary (queries x support x dim) block in rbf_scores.
_BLOCK_ELEMS = 1 << 21


def rbf_row(x, X, gamma):
    """K(x, X[j]) for every row j of X."""
    if X.shape[0] == 0:
        return np.empty(0)
    diff = X - x
    return np.exp(-gamma * np.einsum("ij,ij->i", diff, diff))


def rbf_scores(Q, X, beta, gamma, bias):
    """sum_j beta[j] K(Q[i], X[j]) + bias for every row i of Q."""
    nq = Q.shape[0]
    out = np.empty(nq)
    ns, dim = X.shape
    if ns == 0:
        out.fill(bias)
        return out
    step = max(1, _BLOCK_ELEMS // max(1, ns * dim))
    for lo in range(0, nq, step):
        diff = Q[lo:lo + step, None, :] - X[None, :, :]
        sq = np.einsum("ijk,ijk->ij", diff, diff)
        k = np.exp(-gamma * sq)
        out[lo:lo + step] = (k * beta).sum(axis=1) + bias
    return out
