"""Single-layer GRU language policy with hand-written backpropagation.

The input embedding maps each token straight to the three gate
pre-activations (update, reset, candidate), so the cell is

    z = sigmoid(E_z[x] + h U_z + b_z)
    r = sigmoid(E_r[x] + h U_r + b_r)
    n = tanh(E_n[x] + (r * h) U_n + b_n)
    h' = (1 - z) * n + z * h

and next-token logits are ``h' W + c``.  Batches of ragged sequences are
right-padded; padded steps leave the hidden state untouched.
"""

from __future__ import annotations

import numpy as np

from ..vocab import Vocabulary
from .base import Policy, Trace, log_softmax


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class GRUPolicy(Policy):
    kind = "gru"

    def __init__(self, vocab: Vocabulary, hidden: int = 64, params: np.ndarray | None = None,
                 seed: int | None = 0, init_scale: float = 0.08):
        self.vocab = vocab
        self.hidden = H = hidden
        V = len(vocab)
        self._shapes = {
            "E": (V, 3 * H),
            "U_zr": (H, 2 * H),
            "U_n": (H, H),
            "b": (3 * H,),
            "W": (H, V),
            "c": (V,),
        }
        size = sum(int(np.prod(s)) for s in self._shapes.values())
        if params is None:
            rng = np.random.default_rng(seed)
            params = rng.uniform(-init_scale, init_scale, size=size)
        if params.size != size:
            raise ValueError(f"expected {size} parameters, got {params.size}")
        self.params = params
        self._bind()

    def _bind(self) -> None:
        offset = 0
        for name, shape in self._shapes.items():
            n = int(np.prod(shape))
            setattr(self, name, self.params[offset : offset + n].reshape(shape))
            offset += n

    def descriptor(self) -> dict:
        return {"kind": self.kind, "hidden": self.hidden}

    @classmethod
    def from_descriptor(cls, vocab, descriptor, params):
        return cls(vocab, hidden=descriptor["hidden"], params=params)

    # -- cell ----------------------------------------------------------------
    def _cell(self, h: np.ndarray, e: np.ndarray):
        """One step given the gathered input rows ``e = E[x] + b``."""
        H = self.hidden
        zr = _sigmoid(e[:, : 2 * H] + h @ self.U_zr)
        z, r = zr[:, :H], zr[:, H:]
        rh = r * h
        n = np.tanh(e[:, 2 * H :] + rh @ self.U_n)
        h_new = n + z * (h - n)
        return h_new, (z, r, n, rh)

    def start(self, prompts):
        self._check_tokens(prompts)
        rows = [list(p) + [self.vocab.bos_id] for p in prompts]
        lengths = np.array([len(r) for r in rows])
        T = int(lengths.max())
        x = np.full((len(rows), T), self.vocab.pad_id, dtype=np.int64)
        for i, r in enumerate(rows):
            x[i, : len(r)] = r
        h = np.zeros((len(rows), self.hidden))
        e = self.E[x] + self.b
        for t in range(T):
            h_new, _ = self._cell(h, e[:, t])
            m = (t < lengths)[:, None]
            h = np.where(m, h_new, h)
        return h, h @ self.W + self.c

    def advance(self, state, tokens):
        h, _ = self._cell(state, self.E[np.asarray(tokens, dtype=np.int64)] + self.b)
        return h, h @ self.W + self.c

    # -- training passes -------------------------------------------------------
    def forward(self, prompts, completions):
        self._check_tokens(prompts)
        self._check_tokens(completions)
        B = len(prompts)
        bos = self.vocab.bos_id
        starts = np.array([len(p) for p in prompts])       # index of BOS in the input row
        clens = np.array([len(c) for c in completions])
        in_lens = starts + np.maximum(clens, 1)             # inputs: prompt, BOS, completion[:-1]
        T = int(in_lens.max())
        x = np.full((B, T), self.vocab.pad_id, dtype=np.int64)
        y = np.zeros((B, T), dtype=np.int64)
        out_mask = np.zeros((B, T), dtype=bool)
        for i, (p, c) in enumerate(zip(prompts, completions)):
            row = list(p) + [bos] + list(c[:-1])
            x[i, : len(row)] = row
            s = len(p)
            y[i, s : s + len(c)] = c
            out_mask[i, s : s + len(c)] = True
        step_mask = np.arange(T)[None, :] < in_lens[:, None]

        H = self.hidden
        hs = np.zeros((T + 1, B, H))
        gates = []
        e = self.E[x] + self.b
        for t in range(T):
            h_new, g = self._cell(hs[t], e[:, t])
            m = step_mask[:, t][:, None]
            hs[t + 1] = np.where(m, h_new, hs[t])
            gates.append(g)
        hid = hs[1:].transpose(1, 0, 2)                     # (B, T, H)
        lsm = log_softmax(hid @ self.W + self.c)            # (B, T, V)
        tok_lp = np.take_along_axis(lsm, y[..., None], axis=-1)[..., 0]
        logprobs = [tok_lp[i, starts[i] : starts[i] + clens[i]].copy() for i in range(B)]
        cache = dict(x=x, y=y, out_mask=out_mask, step_mask=step_mask, hs=hs, gates=gates,
                     lsm=lsm, starts=starts, clens=clens)
        return Trace(logprobs, cache)

    def backward(self, trace, weights):
        cache = trace.cache
        x, y, hs, gates, lsm = cache["x"], cache["y"], cache["hs"], cache["gates"], cache["lsm"]
        starts, clens, step_mask = cache["starts"], cache["clens"], cache["step_mask"]
        B, T = x.shape
        H = self.hidden
        w = np.zeros((B, T))
        for i, wi in enumerate(weights):
            wi = np.asarray(wi, dtype=float)
            if wi.shape != (clens[i],):
                raise ValueError("weights do not match completion length")
            w[i, starts[i] : starts[i] + clens[i]] = wi

        # d/dlogits of sum w * log_softmax[y]
        dlogits = -np.exp(lsm) * w[..., None]
        np.put_along_axis(dlogits, y[..., None], np.take_along_axis(dlogits, y[..., None], axis=-1) + w[..., None],
                          axis=-1)
        hid = hs[1:].transpose(1, 0, 2)
        V = dlogits.shape[-1]
        dW = hid.reshape(-1, H).T @ dlogits.reshape(-1, V)
        dc = dlogits.sum(axis=(0, 1))
        dhid = (dlogits @ self.W.T).transpose(1, 0, 2)      # (T, B, H)

        DE = np.zeros((T, B, 3 * H))
        RH = np.empty((T, B, H))
        dh = np.zeros((B, H))
        for t in range(T - 1, -1, -1):
            dh = dh + dhid[t]
            m = step_mask[:, t][:, None]
            h_prev = hs[t]
            z, r, n, rh = gates[t]
            RH[t] = rh
            dh_new = np.where(m, dh, 0.0)
            dh_prev = np.where(m, 0.0, dh)
            dn = dh_new * (1.0 - z)
            dz = dh_new * (h_prev - n)
            dh_prev += dh_new * z
            de = DE[t]
            da_n = de[:, 2 * H :]
            np.multiply(dn, 1.0 - n * n, out=da_n)
            drh = da_n @ self.U_n.T
            dh_prev += drh * r
            de[:, :H] = dz * z * (1.0 - z)
            de[:, H : 2 * H] = drh * h_prev * r * (1.0 - r)
            dh_prev += de[:, : 2 * H] @ self.U_zr.T
            dh = dh_prev
        dU_n = RH.reshape(-1, H).T @ DE[:, :, 2 * H :].reshape(-1, H)
        dU_zr = hs[:-1].reshape(-1, H).T @ DE[:, :, : 2 * H].reshape(-1, 2 * H)
        flat = DE.reshape(-1, 3 * H)
        db = flat.sum(axis=0)
        onehot = np.zeros((flat.shape[0], self.E.shape[0]))
        onehot[np.arange(flat.shape[0]), x.T.ravel()] = 1.0
        dE = onehot.T @ flat
        return np.concatenate([dE.ravel(), dU_zr.ravel(), dU_n.ravel(), db, dW.ravel(), dc])
