"""Message-passing layers with analytic gradients.

Parameters live in plain dicts of numpy arrays, graphs in flat edge arrays
(src feeds dst). Every forward returns a cache that its backward consumes;
backward returns the gradient w.r.t. the input features plus a gradient dict
shaped exactly like the parameter dict. No autograd anywhere: each formula
below is differentiated by hand and finite-difference tests hold the line.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

LEAKY_SLOPE = 0.2


def elu(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, x, np.expm1(x))


def elu_grad(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, 1.0, np.exp(x))


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape: tuple[int, ...]) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_gat_layer(rng: np.random.Generator, d_in: int, d_out: int) -> dict[str, np.ndarray]:
    return {
        "weight": glorot(rng, d_in, d_out, (d_in, d_out)),
        "bias": np.zeros(d_out),
        "att": glorot(rng, 2 * d_out, 1, (2 * d_out,)),
    }


def init_sage_layer(rng: np.random.Generator, d_in: int, d_out: int) -> dict[str, np.ndarray]:
    return {
        "weight": glorot(rng, d_in, d_out, (d_in, d_out)),
        "bias": np.zeros(d_out),
    }


def add_self_loops(n: int, src: np.ndarray, dst: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    loops = np.arange(n)
    return np.concatenate([src, loops]), np.concatenate([dst, loops])


def gat_forward(
    h: np.ndarray,
    params: dict[str, np.ndarray],
    src: np.ndarray,
    dst: np.ndarray,
    activate: bool,
) -> tuple[np.ndarray, dict]:
    """Single-head attention layer.

    Edge scores are LeakyReLU(a_self . g_center + a_neigh . g_source) with
    softmax over each center's in-edges; self-loops are appended here so every
    node attends at least to itself.
    """
    n, d_out = len(h), params["weight"].shape[1]
    src, dst = add_self_loops(n, src, dst)
    g = h @ params["weight"]
    a_self, a_neigh = params["att"][:d_out], params["att"][d_out:]
    score = g[dst] @ a_self + g[src] @ a_neigh
    bent = np.where(score > 0, score, LEAKY_SLOPE * score)

    peak = np.full(n, -np.inf)
    np.maximum.at(peak, dst, bent)
    ex = np.exp(bent - peak[dst])
    z = np.zeros(n)
    np.add.at(z, dst, ex)
    alpha = ex / z[dst]

    pre = np.zeros((n, d_out))
    np.add.at(pre, dst, alpha[:, None] * g[src])
    pre += params["bias"]
    out = elu(pre) if activate else pre
    cache = {
        "h": h, "g": g, "src": src, "dst": dst, "score": score,
        "alpha": alpha, "pre": pre, "activate": activate, "params": params,
    }
    return out, cache


def gat_backward(cache: dict, d_out_grad: np.ndarray) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    params = cache["params"]
    h, g = cache["h"], cache["g"]
    src, dst = cache["src"], cache["dst"]
    alpha, score, pre = cache["alpha"], cache["score"], cache["pre"]
    d_outdim = params["weight"].shape[1]
    a_self, a_neigh = params["att"][:d_outdim], params["att"][d_outdim:]

    d_pre = d_out_grad * elu_grad(pre) if cache["activate"] else d_out_grad.copy()
    d_bias = d_pre.sum(axis=0)

    # message term: pre_i = sum_e alpha_e * g[src_e]
    d_alpha = np.einsum("ed,ed->e", d_pre[dst], g[src])
    d_g = np.zeros_like(g)
    np.add.at(d_g, src, alpha[:, None] * d_pre[dst])

    # softmax over each center's edges
    weighted = alpha * d_alpha
    per_center = np.zeros(len(h))
    np.add.at(per_center, dst, weighted)
    d_bent = alpha * (d_alpha - per_center[dst])

    d_score = d_bent * np.where(score > 0, 1.0, LEAKY_SLOPE)

    d_a_self = d_score @ g[dst]
    d_a_neigh = d_score @ g[src]
    np.add.at(d_g, dst, d_score[:, None] * a_self[None, :])
    np.add.at(d_g, src, d_score[:, None] * a_neigh[None, :])

    d_weight = h.T @ d_g
    d_h = d_g @ params["weight"].T
    grads = {
        "weight": d_weight,
        "bias": d_bias,
        "att": np.concatenate([d_a_self, d_a_neigh]),
    }
    return d_h, grads


def sage_forward(
    h: np.ndarray,
    params: dict[str, np.ndarray],
    src: np.ndarray,
    dst: np.ndarray,
    activate: bool,
) -> tuple[np.ndarray, dict]:
    """Mean aggregation over the node and its in-neighbors, then a dense map."""
    n = len(h)
    cnt = np.ones(n)
    np.add.at(cnt, dst, 1.0)
    agg = h.copy()
    np.add.at(agg, dst, h[src])
    agg /= cnt[:, None]
    z = agg @ params["weight"] + params["bias"]
    out = elu(z) if activate else z
    cache = {
        "h": h, "agg": agg, "z": z, "cnt": cnt, "src": src, "dst": dst,
        "activate": activate, "params": params,
    }
    return out, cache


def sage_backward(cache: dict, d_out_grad: np.ndarray) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    params = cache["params"]
    d_z = d_out_grad * elu_grad(cache["z"]) if cache["activate"] else d_out_grad.copy()
    d_weight = cache["agg"].T @ d_z
    d_bias = d_z.sum(axis=0)
    d_agg = (d_z @ params["weight"].T) / cache["cnt"][:, None]
    d_h = d_agg.copy()
    np.add.at(d_h, cache["src"], d_agg[cache["dst"]])
    return d_h, {"weight": d_weight, "bias": d_bias}


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


BCE_CLAMP = 1e-7


def bce_loss(probs: np.ndarray, targets: np.ndarray) -> float:
    p = np.clip(probs, BCE_CLAMP, 1.0 - BCE_CLAMP)
    return float(-np.mean(targets * np.log(p) + (1.0 - targets) * np.log(1.0 - p)))


def bce_grad_wrt_logits(probs: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """d loss / d logit, consistent with the clamp (clamped points go dead)."""
    inside = (probs > BCE_CLAMP) & (probs < 1.0 - BCE_CLAMP)
    return np.where(inside, probs - targets, 0.0) / len(probs)


class Adam:
    """Bias-corrected Adam over a list of parameter dicts."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self._m: dict[tuple[int, str], np.ndarray] = {}
        self._v: dict[tuple[int, str], np.ndarray] = {}

    def step(self, params: list[dict[str, np.ndarray]], grads: list[dict[str, np.ndarray]]) -> None:
        self.step_count += 1
        t = self.step_count
        for i, (layer, grad) in enumerate(zip(params, grads)):
            for name, g in grad.items():
                key = (i, name)
                if key not in self._m:
                    self._m[key] = np.zeros_like(g)
                    self._v[key] = np.zeros_like(g)
                m = self._m[key] = self.beta1 * self._m[key] + (1 - self.beta1) * g
                v = self._v[key] = self.beta2 * self._v[key] + (1 - self.beta2) * g * g
                m_hat = m / (1 - self.beta1**t)
                v_hat = v / (1 - self.beta2**t)
                layer[name] = layer[name] - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
