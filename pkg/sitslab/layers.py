# sitslab/layers.py: forward and analytic backward passes for the network blocks
from __future__ import annotations

from typing import Literal

import numpy as np

from .errors import ArgumentError, ShapeError, StateError
from .numeric import Matrix, RngStream, as_matrix, glorot_uniform, sigmoid, softmax

__all__ = ["FcLayer", "GruCell", "AttentionHead", "DropoutMask", "softmax_cross_entropy"]

Activation = Literal["relu", "none"]


class FcLayer:
    """Fully connected layer ``activation(W x + b)``.

    Accepts one vector ``(in,)`` or a time-distributed block ``(T, in)``;
    the same weights are applied to every row.
    """

    def __init__(self, W, b, activation: Activation = "relu"):
        self.W = as_matrix(W)
        self.b = as_matrix(b)
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],):
            raise ShapeError(f"FcLayer: W{self.W.shape} and b{self.b.shape} disagree")
        if activation not in ("relu", "none"):
            raise ArgumentError(f"unknown activation '{activation}'")
        self.activation = activation
        self._x = None
        self._pre = None

    @classmethod
    def create(cls, n_in: int, n_out: int, stream: RngStream, activation: Activation = "relu") -> "FcLayer":
        return cls(glorot_uniform(stream, n_out, n_in), np.zeros(n_out), activation)

    @property
    def n_in(self) -> int: return self.W.shape[1]

    @property
    def n_out(self) -> int: return self.W.shape[0]

    def params(self) -> dict[str, Matrix]:
        return {"W": self.W, "b": self.b}

    def forward(self, x) -> Matrix:
        x = as_matrix(x)
        if x.shape[-1] != self.n_in or x.ndim not in (1, 2):
            raise ShapeError(f"FcLayer expects (..., {self.n_in}) input, got {x.shape}")
        pre = x @ self.W.T + self.b
        self._x, self._pre = x, pre
        return np.maximum(pre, 0.0) if self.activation == "relu" else pre

    def backward(self, grad_out) -> tuple[Matrix, Matrix, Matrix]:
        if self._x is None:
            raise StateError("FcLayer.backward called before forward")
        g = as_matrix(grad_out)
        if g.shape != self._pre.shape:
            raise ShapeError(f"FcLayer grad_out {g.shape} does not match output {self._pre.shape}")
        if self.activation == "relu":
            g = g * (self._pre > 0)
        if g.ndim == 1:
            grad_W, grad_b = np.outer(g, self._x), g.copy()
        else:
            grad_W, grad_b = g.T @ self._x, g.sum(axis=0)
        return g @ self.W, grad_W, grad_b


class GruCell:
    """Gated recurrent unit with the reset gate applied inside the candidate.

        z_t = σ(W_z x_t + U_z h_{t-1} + b_z)
        r_t = σ(W_r x_t + U_r h_{t-1} + b_r)
        h̃_t = tanh(W_h x_t + U_h (r_t ⊙ h_{t-1}) + b_h)
        h_t = (1 - z_t) ⊙ h_{t-1} + z_t ⊙ h̃_t
    """

    _NAMES = ("W_z", "W_r", "W_h", "U_z", "U_r", "U_h", "b_z", "b_r", "b_h")

    def __init__(self, W_z, W_r, W_h, U_z, U_r, U_h, b_z, b_r, b_h):
        self.W_z, self.W_r, self.W_h = as_matrix(W_z), as_matrix(W_r), as_matrix(W_h)
        self.U_z, self.U_r, self.U_h = as_matrix(U_z), as_matrix(U_r), as_matrix(U_h)
        self.b_z, self.b_r, self.b_h = as_matrix(b_z), as_matrix(b_r), as_matrix(b_h)
        H, I = self.W_z.shape
        for name in self._NAMES:
            want = (H, I) if name[0] == "W" else (H, H) if name[0] == "U" else (H,)
            if getattr(self, name).shape != want:
                raise ShapeError(f"GruCell.{name} has shape {getattr(self, name).shape}, expected {want}")
        self._cache = None

    @classmethod
    def create(cls, n_in: int, hidden: int, stream: RngStream) -> "GruCell":
        W = [glorot_uniform(stream, hidden, n_in) for _ in range(3)]
        U = [glorot_uniform(stream, hidden, hidden) for _ in range(3)]
        return cls(*W, *U, *(np.zeros(hidden) for _ in range(3)))

    @classmethod
    def zeros(cls, n_in: int, hidden: int) -> "GruCell":
        return cls(*(np.zeros((hidden, n_in)) for _ in range(3)),
                   *(np.zeros((hidden, hidden)) for _ in range(3)),
                   *(np.zeros(hidden) for _ in range(3)))

    @property
    def n_in(self) -> int: return self.W_z.shape[1]

    @property
    def hidden(self) -> int: return self.W_z.shape[0]

    def params(self) -> dict[str, Matrix]:
        return {name: getattr(self, name) for name in self._NAMES}

    def step(self, x_t, h_prev) -> Matrix:
        return self.forward(as_matrix(x_t)[None, :], h_prev)[0]

    def forward(self, xs, h0=None) -> Matrix:
        xs = as_matrix(xs)
        if xs.ndim != 2 or xs.shape[0] == 0:
            raise ArgumentError(f"GRU needs a nonempty (T, {self.n_in}) sequence, got {xs.shape}")
        if xs.shape[1] != self.n_in:
            raise ShapeError(f"GRU input width {xs.shape[1]} != {self.n_in}")
        H = self.hidden
        h = np.zeros(H) if h0 is None else as_matrix(h0)
        if h.shape != (H,):
            raise ShapeError(f"GRU h0 shape {h.shape} != ({H},)")

        # input projections for all timesteps at once
        xz = xs @ self.W_z.T + self.b_z
        xr = xs @ self.W_r.T + self.b_r
        xh = xs @ self.W_h.T + self.b_h

        T = xs.shape[0]
        hp, zs, rs, hc, hs = (np.empty((T, H)) for _ in range(5))
        for t in range(T):
            z = sigmoid(xz[t] + self.U_z @ h)
            r = sigmoid(xr[t] + self.U_r @ h)
            cand = np.tanh(xh[t] + self.U_h @ (r * h))
            hp[t], zs[t], rs[t], hc[t] = h, z, r, cand
            h = (1.0 - z) * h + z * cand
            hs[t] = h
        self._cache = (xs, hp, zs, rs, hc)
        return hs

    def backward(self, grads_h) -> tuple[Matrix, Matrix, dict[str, Matrix]]:
        """Backpropagation through time.

        ``grads_h[t]`` is the loss gradient w.r.t. ``h_t`` coming from outside
        the recurrence. Returns ``(grad_xs, grad_h0, parameter grads)``.
        """
        if self._cache is None:
            raise StateError("GruCell.backward called before forward")
        xs, hp, zs, rs, hc = self._cache
        grads_h = as_matrix(grads_h)
        if grads_h.shape != hp.shape:
            raise ShapeError(f"GRU grads_h {grads_h.shape} != {hp.shape}")

        T, H = hp.shape
        da_z, da_r, da_h = np.empty((T, H)), np.empty((T, H)), np.empty((T, H))
        dh_next = np.zeros(H)
        for t in range(T - 1, -1, -1):
            dh = grads_h[t] + dh_next
            z, r, cand, h_prev = zs[t], rs[t], hc[t], hp[t]
            dz = dh * (cand - h_prev)
            dh_prev = dh * (1.0 - z)
            dah = dh * z * (1.0 - cand * cand)
            drh = self.U_h.T @ dah
            dh_prev += drh * r
            daz = dz * z * (1.0 - z)
            dar = drh * h_prev * r * (1.0 - r)
            dh_prev += self.U_z.T @ daz + self.U_r.T @ dar
            da_z[t], da_r[t], da_h[t] = daz, dar, dah
            dh_next = dh_prev

        grads = {
            "W_z": da_z.T @ xs, "W_r": da_r.T @ xs, "W_h": da_h.T @ xs,
            "U_z": da_z.T @ hp, "U_r": da_r.T @ hp, "U_h": da_h.T @ (rs * hp),
            "b_z": da_z.sum(axis=0), "b_r": da_r.sum(axis=0), "b_h": da_h.sum(axis=0),
        }
        grad_xs = da_z @ self.W_z + da_r @ self.W_r + da_h @ self.W_h
        return grad_xs, dh_next, grads


class AttentionHead:
    """Additive temporal attention: ``e_t = u_aᵀ tanh(W_a h_t + b_a)``, ``λ = softmax(e)``."""

    def __init__(self, W_a, b_a, u_a):
        self.W_a, self.b_a, self.u_a = as_matrix(W_a), as_matrix(b_a), as_matrix(u_a)
        A = self.W_a.shape[0]
        if self.b_a.shape != (A,) or self.u_a.shape != (A,):
            raise ShapeError(f"AttentionHead: W_a{self.W_a.shape}, b_a{self.b_a.shape}, u_a{self.u_a.shape}")
        self._cache = None

    @classmethod
    def create(cls, hidden: int, stream: RngStream, attn: int | None = None) -> "AttentionHead":
        attn = attn or hidden
        return cls(glorot_uniform(stream, attn, hidden), np.zeros(attn), glorot_uniform(stream, 1, attn)[0])

    @property
    def hidden(self) -> int: return self.W_a.shape[1]

    def params(self) -> dict[str, Matrix]:
        return {"W_a": self.W_a, "b_a": self.b_a, "u_a": self.u_a}

    def forward(self, hs) -> tuple[Matrix, Matrix]:
        hs = as_matrix(hs)
        if hs.ndim != 2 or hs.shape[0] == 0:
            raise ArgumentError(f"attention needs a nonempty (T, H) sequence, got {hs.shape}")
        if hs.shape[1] != self.hidden:
            raise ShapeError(f"attention hidden width {hs.shape[1]} != {self.hidden}")
        s = np.tanh(hs @ self.W_a.T + self.b_a)
        weights = softmax(s @ self.u_a)
        self._cache = (hs, s, weights)
        return weights @ hs, weights

    def backward(self, grad_feat) -> tuple[Matrix, dict[str, Matrix]]:
        if self._cache is None:
            raise StateError("AttentionHead.backward called before forward")
        hs, s, lam = self._cache
        g = as_matrix(grad_feat)
        dlam = hs @ g
        grad_hs = np.outer(lam, g)
        de = lam * (dlam - lam @ dlam)
        da = np.outer(de, self.u_a) * (1.0 - s * s)
        grads = {"W_a": da.T @ hs, "b_a": da.sum(axis=0), "u_a": s.T @ de}
        grad_hs += da @ self.W_a
        return grad_hs, grads


class DropoutMask:
    """Inverted dropout; identity in eval mode."""

    def __init__(self, rate: float):
        if not 0.0 <= rate < 1.0:
            raise ArgumentError(f"dropout rate must lie in [0, 1), got {rate}")
        self.rate = float(rate)
        self.mode = "eval"
        self.mask = None

    def apply(self, x, stream: RngStream | None = None, mode: str = "eval") -> Matrix:
        self.mode = mode
        if mode == "eval" or self.rate == 0.0:
            self.mask = None
            return x
        if stream is None:
            raise ArgumentError("train-mode dropout needs a random stream")
        x = as_matrix(x)
        self.mask = (stream.random(x.shape) >= self.rate) / (1.0 - self.rate)
        return x * self.mask

    def backward(self, grad) -> Matrix:
        return grad if self.mask is None else grad * self.mask


def softmax_cross_entropy(logits, true_class: int) -> tuple[float, Matrix, Matrix]:
    """Cross-entropy of ``softmax(logits)`` against one class.

    Returns ``(loss, probs, d loss / d logits)``.
    """
    logits = as_matrix(logits)
    if not 0 <= true_class < logits.shape[0]:
        raise ArgumentError(f"class {true_class} out of range for {logits.shape[0]} logits")
    with np.errstate(over="ignore"):
        shifted = logits - logits.max()
    lse = np.log(np.exp(shifted).sum())
    probs = np.exp(shifted - lse)
    loss = max(float(lse - shifted[true_class]), 0.0)
    grad = probs.copy()
    grad[true_class] -= 1.0
    return loss, probs, grad
