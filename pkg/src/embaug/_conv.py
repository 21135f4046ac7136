"""Compiled convolution kernels with a pinned summation order.

Forward accumulates each output site strictly in (in-channel, kernel-row,
kernel-col) order so results are bit-identical to a scalar nested-loop
reference at the same precision. No fastmath, no reassociation. The
stride-1 branches walk contiguous rows so the site loop vectorizes; the
lanes run sites in parallel, never reordering any single site's sum.
"""

import numba
import numpy as np


@numba.njit(cache=True)
def conv_forward(xp, kernel, bias, stride, out):
    # xp is the already zero-padded input, (N, Ci, Hp, Wp).
    n_imgs, ci_n = xp.shape[0], xp.shape[1]
    co_n, kh_n, kw_n = kernel.shape[0], kernel.shape[2], kernel.shape[3]
    ho, wo = out.shape[2], out.shape[3]
    row = np.empty(wo, out.dtype)
    for n in range(n_imgs):
        for co in range(co_n):
            for i in range(ho):
                for j in range(wo):
                    row[j] = 0.0
                if stride == 1:
                    for ci in range(ci_n):
                        for kh in range(kh_n):
                            xrow = xp[n, ci, i + kh]
                            for kw in range(kw_n):
                                kv = kernel[co, ci, kh, kw]
                                for j in range(wo):
                                    row[j] += kv * xrow[j + kw]
                else:
                    for ci in range(ci_n):
                        for kh in range(kh_n):
                            base = i * stride + kh
                            for kw in range(kw_n):
                                kv = kernel[co, ci, kh, kw]
                                for j in range(wo):
                                    row[j] += kv * xp[n, ci, base, j * stride + kw]
                for j in range(wo):
                    out[n, co, i, j] = row[j] + bias[co]


@numba.njit(cache=True)
def conv_backward_input(gout, kernel, stride, gxp):
    # gxp: preallocated zeros, padded-input shape (N, Ci, Hp, Wp).
    n_imgs = gout.shape[0]
    co_n, ci_n, kh_n, kw_n = kernel.shape
    ho, wo = gout.shape[2], gout.shape[3]
    for n in range(n_imgs):
        for co in range(co_n):
            for ci in range(ci_n):
                for kh in range(kh_n):
                    for kw in range(kw_n):
                        kv = kernel[co, ci, kh, kw]
                        if stride == 1:
                            for i in range(ho):
                                grow = gxp[n, ci, i + kh]
                                gorow = gout[n, co, i]
                                for j in range(wo):
                                    grow[j + kw] += kv * gorow[j]
                        else:
                            for i in range(ho):
                                base = i * stride + kh
                                for j in range(wo):
                                    gxp[n, ci, base, j * stride + kw] += kv * gout[n, co, i, j]


@numba.njit(cache=True)
def conv_backward_kernel(gout, xp, stride, gk):
    co_n, ci_n, kh_n, kw_n = gk.shape
    n_imgs = gout.shape[0]
    ho, wo = gout.shape[2], gout.shape[3]
    rowacc = np.empty(wo, gk.dtype)
    for co in range(co_n):
        for ci in range(ci_n):
            for kh in range(kh_n):
                for kw in range(kw_n):
                    # per-site products land in rowacc so the site loop
                    # vectorizes; the scalar reduction happens once at the end
                    for j in range(wo):
                        rowacc[j] = 0.0
                    if stride == 1:
                        for n in range(n_imgs):
                            for i in range(ho):
                                xrow = xp[n, ci, i + kh]
                                gorow = gout[n, co, i]
                                for j in range(wo):
                                    rowacc[j] += gorow[j] * xrow[j + kw]
                    else:
                        for n in range(n_imgs):
                            for i in range(ho):
                                base = i * stride + kh
                                for j in range(wo):
                                    rowacc[j] += gout[n, co, i, j] * xp[n, ci, base, j * stride + kw]
                    s = gk.dtype.type(0.0)
                    for j in range(wo):
                        s += rowacc[j]
                    gk[co, ci, kh, kw] = s
