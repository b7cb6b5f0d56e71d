"""
numba 编译的单点更新内核

随机数全部由调用方用 numpy Generator 预先抽好传入，内核本身不产生随机数，
因此给定 (几何, 配置, 种子) 的输出逐位可复现。
"""
import math

import numpy as np
from numba import njit

TWO_PI = 2.0 * math.pi
# 热浴内核可处理的最大顶点度数（混合分量枚举的维数为度数减一）
MAX_DEGREE = 5


@njit
def ig_truncation_radius(beta):
    return int(math.ceil(0.5 + math.sqrt((80.0 + beta / 4.0) / beta))) + 1


@njit
def ig_draw(a, beta, u):
    """用一个均匀数 u 从 N^IG(a, β) 抽样（截断表上的逆 CDF）"""
    K = ig_truncation_radius(beta)
    c = math.floor(a + 0.5)
    ref = (c - a) * (c - a)
    total = 0.0
    for j in range(-K, K + 1):
        x = c + j - a
        total += math.exp(-0.5 * beta * (x * x - ref))
    target = u * total
    acc = 0.0
    for j in range(-K, K + 1):
        x = c + j - a
        acc += math.exp(-0.5 * beta * (x * x - ref))
        if acc >= target:
            return int(c + j)
    return int(c + K)


@njit
def _mixture_pass(c1, angles, lo, cnt, dims, beta, s_ref, target, images):
    """
    遍历所有邻居像的组合。target < 0 时返回总权重；
    否则返回累计权重首次达到 target 的组合的平均值。
    """
    deg = dims + 1
    total = 0.0
    idx = np.zeros(dims, dtype=np.int64)
    while True:
        images[0] = c1
        for j in range(dims):
            images[j + 1] = angles[j + 1] + TWO_PI * (lo[j] + idx[j])
        mean = 0.0
        for j in range(deg):
            mean += images[j]
        mean /= deg
        s = 0.0
        for j in range(deg):
            s += (images[j] - mean) * (images[j] - mean)
        total += math.exp(-0.5 * beta * (s - s_ref))
        if target >= 0.0 and total >= target:
            return mean
        # 里程表式进位
        j = 0
        while j < dims:
            idx[j] += 1
            if idx[j] < cnt[j]:
                break
            idx[j] = 0
            j += 1
        if j == dims:
            break
    if target >= 0.0:
        return mean
    return total


@njit
def villain_site_update(theta, x, indptr, nbrs, beta, u, z, angles, lo, cnt, images):
    """
    θ(x) 的热浴更新：条件密度 ∝ Π_j Σ_k exp(-β/2 (θ - θ_j + 2πk)^2)

    取第一个邻居的像固定，其余邻居的像在认证窗口内枚举；每个组合贡献
    N(平均值, 1/(deg·β)) 的混合分量，权重 exp(-β/2 Σ(c_j - c̄)^2)。
    """
    start = indptr[x]
    deg = indptr[x + 1] - start
    for j in range(deg):
        angles[j] = theta[nbrs[start + j]]
    c1 = angles[0]
    dims = deg - 1
    # 最近像给出参考离散度 s_ref
    images[0] = c1
    for j in range(1, deg):
        images[j] = angles[j] + TWO_PI * math.floor((c1 - angles[j]) / TWO_PI + 0.5)
    mean = 0.0
    for j in range(deg):
        mean += images[j]
    mean /= deg
    s_ref = 0.0
    for j in range(deg):
        s_ref += (images[j] - mean) * (images[j] - mean)
    # |c_j - c_1| > D 的分量相对权重 < e^{-28}
    radius = math.sqrt(112.0 / beta + 2.0 * s_ref)
    for j in range(dims):
        t = angles[j + 1]
        kmin = math.ceil((c1 - radius - t) / TWO_PI)
        kmax = math.floor((c1 + radius - t) / TWO_PI)
        lo[j] = kmin
        cnt[j] = max(kmax - kmin + 1, 1)
    total = _mixture_pass(c1, angles, lo, cnt, dims, beta, s_ref, -1.0, images)
    centre = _mixture_pass(c1, angles, lo, cnt, dims, beta, s_ref, u * total, images)
    value = centre + z / math.sqrt(deg * beta)
    value = value - TWO_PI * math.floor(value / TWO_PI)
    if value >= TWO_PI:
        value = 0.0
    theta[x] = value


@njit
def villain_sweeps(theta, indptr, nbrs, sites, beta, uniforms, normals, record_every, out):
    """
    顺序扫描热浴：uniforms / normals 形状为 (扫描数, 格点数)，
    每 record_every 次扫描把 θ 写入 out 的一行
    """
    angles = np.empty(MAX_DEGREE + 1)
    images = np.empty(MAX_DEGREE + 1)
    lo = np.empty(MAX_DEGREE, dtype=np.int64)
    cnt = np.empty(MAX_DEGREE, dtype=np.int64)
    n_sweeps = uniforms.shape[0]
    r = 0
    for s in range(n_sweeps):
        for i in range(sites.shape[0]):
            villain_site_update(theta, sites[i], indptr, nbrs, beta,
                                uniforms[s, i], normals[s, i], angles, lo, cnt, images)
        if record_every > 0 and (s + 1) % record_every == 0:
            out[r, :] = theta
            r += 1
    return r


@njit
def ivgff_sweeps(psi, indptr, nbrs, sites, inv_temp, uniforms, record_every, out):
    """整数值 GFF 的顺序热浴：Ψ(x) | 邻居 ~ N^IG(邻居平均, deg·inv_temp)"""
    n_sweeps = uniforms.shape[0]
    r = 0
    for s in range(n_sweeps):
        for i in range(sites.shape[0]):
            x = sites[i]
            start = indptr[x]
            deg = indptr[x + 1] - start
            acc = 0.0
            for j in range(deg):
                acc += psi[nbrs[start + j]]
            psi[x] = ig_draw(acc / deg, deg * inv_temp, uniforms[s, i])
        if record_every > 0 and (s + 1) % record_every == 0:
            out[r, :] = psi
            r += 1
    return r


@njit
def metropolis_sweeps(q, potential, green, sites, coupling, sign_u, accept_u,
                      record_every, out, energy):
    """
    库仑气体的非局部 Metropolis：在面 f 上提出 q(f) → q(f) ± 1，
    能量差 ΔE = coupling·(s·u(f) + G(f,f)/2)，其中 u = G q 随接受的移动增量维护，
    coupling = (2π)^2 β。

    Returns:
        (记录行数, 接受次数, 增量维护的 ½⟨q, Gq⟩)
    """
    n_sweeps = sign_u.shape[0]
    size = potential.shape[0]
    r = 0
    accepted = 0
    for s in range(n_sweeps):
        for i in range(sites.shape[0]):
            f = sites[i]
            step = 1 if sign_u[s, i] < 0.5 else -1
            delta = step * potential[f] + 0.5 * green[f, f]
            if accept_u[s, i] < math.exp(-coupling * delta):
                q[f] += step
                energy += delta
                for k in range(size):
                    potential[k] += step * green[k, f]
                accepted += 1
        if record_every > 0 and (s + 1) % record_every == 0:
            out[r, :] = q
            r += 1
    return r, accepted, energy
