import numpy as np
import pytest


def conv2d_reference(x, kernel, bias, stride=1, padding=0):
    """Brute-force nested-loop cross-correlation, sequential (ci, kh, kw)
    accumulation per site in the dtype of the inputs."""
    ci_n, h, w = x.shape
    co_n, _, kh_n, kw_n = kernel.shape
    ho = (h + 2 * padding - kh_n) // stride + 1
    wo = (w + 2 * padding - kw_n) // stride + 1
    xp = np.zeros((ci_n, h + 2 * padding, w + 2 * padding), dtype=x.dtype)
    xp[:, padding:padding + h, padding:padding + w] = x
    out = np.empty((co_n, ho, wo), dtype=x.dtype)
    for co in range(co_n):
        for i in range(ho):
            for j in range(wo):
                s = x.dtype.type(0.0)
                for ci in range(ci_n):
                    for kh in range(kh_n):
                        for kw in range(kw_n):
                            s = s + kernel[co, ci, kh, kw] * xp[ci, i * stride + kh, j * stride + kw]
                out[co, i, j] = s + bias[co]
    return out


@pytest.fixture
def conv_reference():
    return conv2d_reference
