"""Pure numpy versions of the compiled kernels (same signatures)."""
import numpy as np


def sq_exp_gram(points, b):
    diff = points[:, None, :] - points[None, :, :]
    out = np.exp(-np.einsum("ijl,l->ij", diff * diff, b))
    out = np.triu(out, 1)
    out = out + out.T
    np.fill_diagonal(out, 1.0)
    return out


def gram_from_sqdisp(sqdisp, b, out):
    p = sqdisp.shape[0]
    block = np.exp(-(sqdisp @ b))
    block = np.triu(block, 1)
    block = block + block.T
    np.fill_diagonal(block, 1.0)
    out[:p, :p] = block
    return out


def sq_exp_cross(design, s, b):
    diff = design - s
    return np.exp(-((diff * diff) @ b))


def component_contract(g, sigma_inv, j, k):
    g4 = g.reshape(j, k, j, k)
    out = np.einsum("tu,rtsu->rs", sigma_inv, g4)
    upper = np.triu(out)
    return upper + np.triu(out, 1).T
