"""Desk-scale encoders mapping token embeddings ``(T, d)`` to hidden states ``(T, H)``.

Both encoders expose the same three functions (``init``, ``forward``,
``backward``) over a flat ``{name: ndarray}`` parameter dict, so the CRF and
softmax heads never need to know which one produced their inputs.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, softmax

from ..errors import ConfigError


class EncoderKind(str, enum.Enum):
    RECURRENT = "recurrent"
    ATTENTION = "attention"

    @classmethod
    def parse(cls, name: str) -> "EncoderKind":
        key = name.strip().lower()
        aliases = {"recurrent": cls.RECURRENT, "embedbirecurrent": cls.RECURRENT, "bilstm": cls.RECURRENT,
                   "attention": cls.ATTENTION, "embedselfattention": cls.ATTENTION, "self-attention": cls.ATTENTION}
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown encoder {name!r}") from None


@dataclass(frozen=True)
class EncoderConfig:
    kind: EncoderKind = EncoderKind.RECURRENT
    vocab_size: int = 2
    embed_dim: int = 32
    hidden_dim: int = 128
    attention_heads: int = 4
    dropout_rate: float = 0.1
    seed: int = 42

    def __post_init__(self):
        if not isinstance(self.kind, EncoderKind):
            object.__setattr__(self, "kind", EncoderKind.parse(str(self.kind)))
        if min(self.vocab_size, self.embed_dim, self.hidden_dim) <= 0:
            raise ConfigError("encoder dimensions must be positive")
        if self.kind is EncoderKind.RECURRENT and self.hidden_dim % 2:
            raise ConfigError("recurrent hidden_dim must be even (split across two directions)")
        if self.kind is EncoderKind.ATTENTION and (self.attention_heads <= 0 or self.hidden_dim % self.attention_heads):
            raise ConfigError("attention_heads must divide hidden_dim")
        if not 0 <= self.dropout_rate < 1:
            raise ConfigError("dropout_rate must lie in [0, 1)")

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "vocab_size": self.vocab_size, "embed_dim": self.embed_dim,
                "hidden_dim": self.hidden_dim, "attention_heads": self.attention_heads,
                "dropout_rate": self.dropout_rate, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderConfig":
        return cls(EncoderKind.parse(d["kind"]), int(d["vocab_size"]), int(d["embed_dim"]),
                   int(d["hidden_dim"]), int(d["attention_heads"]), float(d["dropout_rate"]), int(d["seed"]))


def _uniform(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


# --------------------------------------------------------------------------
# bidirectional LSTM


class Recurrent:
    @staticmethod
    def init(cfg: EncoderConfig, rng) -> dict:
        d, h = cfg.embed_dim, cfg.hidden_dim // 2
        params = {}
        for name in ("lstm_fwd", "lstm_bwd"):
            params[f"{name}.W"] = _uniform(rng, (d + h, 4 * h), d + h)
            bias = np.zeros(4 * h)
            bias[h:2 * h] = 1.0  # forget gate starts open
            params[f"{name}.b"] = bias
        return params

    @staticmethod
    def _run(W, b, X):
        T, d = X.shape
        hd = W.shape[1] // 4
        h = np.zeros(hd)
        c = np.zeros(hd)
        out = np.empty((T, hd))
        steps = []
        for t in range(T):
            xh = np.concatenate([X[t], h])
            z = xh @ W + b
            i = expit(z[:hd])
            f = expit(z[hd:2 * hd])
            o = expit(z[2 * hd:3 * hd])
            g = np.tanh(z[3 * hd:])
            c_prev = c
            c = f * c_prev + i * g
            tc = np.tanh(c)
            h = o * tc
            out[t] = h
            steps.append((xh, i, f, o, g, c_prev, tc))
        return out, steps

    @staticmethod
    def _run_backward(W, steps, dH, d):
        hd = W.shape[1] // 4
        T = len(steps)
        dW = np.zeros_like(W)
        db = np.zeros(W.shape[1])
        dX = np.empty((T, d))
        dh_next = np.zeros(hd)
        dc_next = np.zeros(hd)
        for t in range(T - 1, -1, -1):
            xh, i, f, o, g, c_prev, tc = steps[t]
            dh = dH[t] + dh_next
            do = dh * tc
            dc = dh * o * (1.0 - tc * tc) + dc_next
            dz = np.concatenate([dc * g * i * (1.0 - i), dc * c_prev * f * (1.0 - f),
                                 do * o * (1.0 - o), dc * i * (1.0 - g * g)])
            dc_next = dc * f
            dW += np.outer(xh, dz)
            db += dz
            dxh = W @ dz
            dX[t] = dxh[:d]
            dh_next = dxh[d:]
        return dW, db, dX

    @staticmethod
    def forward(params: dict, X: np.ndarray):
        hf, sf = Recurrent._run(params["lstm_fwd.W"], params["lstm_fwd.b"], X)
        hb, sb = Recurrent._run(params["lstm_bwd.W"], params["lstm_bwd.b"], X[::-1])
        H = np.concatenate([hf, hb[::-1]], axis=1)
        return H, None, (X.shape[1], sf, sb, hf.shape[1])

    @staticmethod
    def backward(params: dict, cache, dH: np.ndarray):
        d, sf, sb, hd = cache
        dWf, dbf, dXf = Recurrent._run_backward(params["lstm_fwd.W"], sf, dH[:, :hd], d)
        dWb, dbb, dXb = Recurrent._run_backward(params["lstm_bwd.W"], sb, dH[::-1, hd:], d)
        grads = {"lstm_fwd.W": dWf, "lstm_fwd.b": dbf, "lstm_bwd.W": dWb, "lstm_bwd.b": dbb}
        return grads, dXf + dXb[::-1]


# --------------------------------------------------------------------------
# single-layer multi-head self-attention


class Attention:
    @staticmethod
    def init(cfg: EncoderConfig, rng) -> dict:
        d, H = cfg.embed_dim, cfg.hidden_dim
        return {
            "attn.W_in": _uniform(rng, (d, H), d),
            "attn.b_in": np.zeros(H),
            "attn.W_q": _uniform(rng, (H, H), H),
            "attn.W_k": _uniform(rng, (H, H), H),
            "attn.W_v": _uniform(rng, (H, H), H),
            "attn.W_o": _uniform(rng, (H, H), H),
        }

    @staticmethod
    def forward(params: dict, X: np.ndarray, n_heads: int):
        u = np.tanh(X @ params["attn.W_in"] + params["attn.b_in"])
        Q, K, V = u @ params["attn.W_q"], u @ params["attn.W_k"], u @ params["attn.W_v"]
        T, H = u.shape
        dh = H // n_heads
        scale = 1.0 / np.sqrt(dh)
        A = np.empty((n_heads, T, T))
        C = np.empty((T, H))
        for k in range(n_heads):
            sl = slice(k * dh, (k + 1) * dh)
            A[k] = softmax(Q[:, sl] @ K[:, sl].T * scale, axis=1)
            C[:, sl] = A[k] @ V[:, sl]
        out = u + C @ params["attn.W_o"]
        return out, A, (X, u, Q, K, V, A, C, n_heads)

    @staticmethod
    def backward(params: dict, cache, dOut: np.ndarray):
        X, u, Q, K, V, A, C, n_heads = cache
        T, H = u.shape
        dh = H // n_heads
        scale = 1.0 / np.sqrt(dh)
        grads = {"attn.W_o": C.T @ dOut}
        dC = dOut @ params["attn.W_o"].T
        du = dOut.copy()
        dQ, dK, dV = np.empty_like(Q), np.empty_like(K), np.empty_like(V)
        for k in range(n_heads):
            sl = slice(k * dh, (k + 1) * dh)
            dA = dC[:, sl] @ V[:, sl].T
            dV[:, sl] = A[k].T @ dC[:, sl]
            dS = A[k] * (dA - (dA * A[k]).sum(axis=1, keepdims=True)) * scale
            dQ[:, sl] = dS @ K[:, sl]
            dK[:, sl] = dS.T @ Q[:, sl]
        grads["attn.W_q"] = u.T @ dQ
        grads["attn.W_k"] = u.T @ dK
        grads["attn.W_v"] = u.T @ dV
        du += dQ @ params["attn.W_q"].T + dK @ params["attn.W_k"].T + dV @ params["attn.W_v"].T
        dz = du * (1.0 - u * u)
        grads["attn.W_in"] = X.T @ dz
        grads["attn.b_in"] = dz.sum(axis=0)
        return grads, dz @ params["attn.W_in"].T
