"""Single-layer LSTM phoneme language model written directly in numpy.

The model predicts the next symbol of an encoded utterance::

    p(x_t | x_<t) = softmax(W_out LSTM(Emb x_<t) + b_out)

restricted to the symbols allowed by a language mask.  Restriction happens
by gathering the allowed logits before the softmax, so symbols outside the
mask get neither probability nor gradient.

Gates are stored stacked in ``W`` (rows ``i, f, o, g``) acting on the
concatenation ``[Emb[:, x]; h]``.  Named per-gate views are available via
:meth:`LMParams.blocks`.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import expit

from .errors import ConfigError, NumericFailure

BLOCK_NAMES = (
    "emb", "W_i", "W_f", "W_o", "W_g", "b_i", "b_f", "b_o", "b_g", "W_out", "b_out",
)


@dataclass
class LMParams:
    emb: np.ndarray    # (d, V)
    W: np.ndarray      # (4h, d + h), gate rows i, f, o, g
    b: np.ndarray      # (4h,)
    W_out: np.ndarray  # (V, h)
    b_out: np.ndarray  # (V,)
    alphabet_hash: str = ""

    def __post_init__(self):
        d, V = self.emb.shape
        h4, dh = self.W.shape
        h = h4 // 4
        if (
            h4 != 4 * h or dh != d + h or self.b.shape != (h4,)
            or self.W_out.shape != (V, h) or self.b_out.shape != (V,)
        ):
            raise ConfigError("inconsistent LM parameter shapes")

    @property
    def embed_dim(self) -> int:
        return self.emb.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.W_out.shape[1]

    @property
    def vocab_size(self) -> int:
        return self.emb.shape[1]

    @property
    def meta(self) -> dict:
        return {
            "d": self.embed_dim,
            "h": self.hidden_dim,
            "V": self.vocab_size,
            "alphabet_hash": self.alphabet_hash,
        }

    def arrays(self) -> dict[str, np.ndarray]:
        return {"emb": self.emb, "W": self.W, "b": self.b,
                "W_out": self.W_out, "b_out": self.b_out}

    def blocks(self) -> dict[str, np.ndarray]:
        """Per-gate views; writing into a view writes into the parameters."""
        h = self.hidden_dim
        out = {"emb": self.emb}
        for k, g in enumerate("ifog"):
            out[f"W_{g}"] = self.W[k * h:(k + 1) * h]
        for k, g in enumerate("ifog"):
            out[f"b_{g}"] = self.b[k * h:(k + 1) * h]
        out["W_out"] = self.W_out
        out["b_out"] = self.b_out
        return out

    def copy(self) -> "LMParams":
        return LMParams(
            self.emb.copy(), self.W.copy(), self.b.copy(),
            self.W_out.copy(), self.b_out.copy(), self.alphabet_hash,
        )

    def all_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in self.arrays().values())

    def nonfinite_block(self) -> str | None:
        for name, arr in self.blocks().items():
            if not np.isfinite(arr).all():
                return name
        return None


@dataclass
class LMState:
    h: np.ndarray
    c: np.ndarray


@dataclass
class TrainConfig:
    embed_dim: int = 64
    hidden_dim: int = 256
    optimizer: str = "adam"       # "adam" or "sgd" (with momentum)
    lr: float = 1e-3
    lr_decay: float = 1.0         # multiplicative, applied after every epoch
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    dropout: float = 0.0
    clip_norm: float = 5.0
    max_epochs: int = 10
    max_steps: int | None = None
    patience: int = 3
    truncation: int = 64
    batch_size: int = 1
    shuffle: bool = True
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")
        if self.clip_norm <= 0:
            raise ConfigError("clip_norm must be > 0")
        if self.truncation < 2:
            raise ConfigError("truncation must be >= 2")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")

    def to_dict(self) -> dict:
        return asdict(self)


def plm_small(**overrides) -> TrainConfig:
    return TrainConfig(**{"embed_dim": 64, "hidden_dim": 256, "dropout": 0.0, **overrides})


def plm_large(**overrides) -> TrainConfig:
    return TrainConfig(**{"embed_dim": 64, "hidden_dim": 1024, "dropout": 0.4, **overrides})


# ---------------------------------------------------------------- construction

def _uniform(rng, shape, h):
    bound = 1.0 / math.sqrt(h)
    return rng.uniform(-bound, bound, size=shape)


def init_params(vocab_size: int, embed_dim: int, hidden_dim: int,
                rng: np.random.Generator | int = 0, alphabet_hash: str = "") -> LMParams:
    """Uniform(+-1/sqrt(h)) matrices, zero biases, forget-gate bias 1."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    V, d, h = vocab_size, embed_dim, hidden_dim
    emb = _uniform(rng, (d, V), h)
    W = _uniform(rng, (4 * h, d + h), h)
    W_out = _uniform(rng, (V, h), h)
    b = np.zeros(4 * h)
    b[h:2 * h] = 1.0
    return LMParams(emb, W, b, W_out, np.zeros(V), alphabet_hash)


def zero_params(vocab_size: int, embed_dim: int, hidden_dim: int,
                alphabet_hash: str = "") -> LMParams:
    V, d, h = vocab_size, embed_dim, hidden_dim
    return LMParams(np.zeros((d, V)), np.zeros((4 * h, d + h)), np.zeros(4 * h),
                    np.zeros((V, h)), np.zeros(V), alphabet_hash)


def param_count(vocab_size: int, embed_dim: int, hidden_dim: int) -> int:
    V, d, h = vocab_size, embed_dim, hidden_dim
    return d * V + 4 * (h * (d + h) + h) + V * h + V


def count_params(p: LMParams) -> int:
    return param_count(p.vocab_size, p.embed_dim, p.hidden_dim)


def grow_params(p: LMParams, new_vocab_size: int, rng: np.random.Generator | int = 0,
                alphabet_hash: str = "") -> LMParams:
    """Append embedding columns / output rows for symbols ids >= p.vocab_size."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    extra = new_vocab_size - p.vocab_size
    if extra < 0:
        raise ConfigError("cannot shrink the vocabulary")
    h = p.hidden_dim
    emb = np.concatenate([p.emb, _uniform(rng, (p.embed_dim, extra), h)], axis=1)
    W_out = np.concatenate([p.W_out, _uniform(rng, (extra, h), h)], axis=0)
    b_out = np.concatenate([p.b_out, np.zeros(extra)])
    return LMParams(emb, p.W.copy(), p.b.copy(), W_out, b_out, alphabet_hash)


# ---------------------------------------------------------------- inference

def zero_state(p: LMParams) -> LMState:
    return LMState(np.zeros(p.hidden_dim), np.zeros(p.hidden_dim))


def _raise_nonfinite(p: LMParams, what: str):
    block = p.nonfinite_block() or what
    raise NumericFailure("non-finite value in LM forward pass", block=block)


def forward_step(p: LMParams, s: LMState, x: int,
                 dropout_mask: np.ndarray | None = None) -> tuple[np.ndarray, LMState]:
    """One LSTM step on symbol ``x``; returns full-vocabulary logits."""
    if not 0 <= x < p.vocab_size:
        raise IndexError(f"symbol id {x} outside vocabulary of {p.vocab_size}")
    h = p.hidden_dim
    z = p.W @ np.concatenate([p.emb[:, x], s.h]) + p.b
    i = expit(z[:h])
    f = expit(z[h:2 * h])
    o = expit(z[2 * h:3 * h])
    g = np.tanh(z[3 * h:])
    c = f * s.c + i * g
    hn = o * np.tanh(c)
    out = hn if dropout_mask is None else hn * dropout_mask
    logits = p.W_out @ out + p.b_out
    if not (np.isfinite(logits).all() and np.isfinite(c).all()):
        _raise_nonfinite(p, "state")
    return logits, LMState(hn, c)


def masked_log_softmax(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Log-softmax over the gathered allowed entries.

    Returns a vector aligned with ``np.flatnonzero(mask)``.
    """
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        raise ConfigError("mask allows no symbols")
    z = logits[idx]
    z = z - z.max()
    return z - np.log(np.exp(z).sum())


def masked_log_probs(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Full-size log-prob vector, ``-inf`` outside the mask (decoder helper)."""
    out = np.full(logits.shape, -np.inf)
    out[mask] = masked_log_softmax(logits, mask)
    return out


# ---------------------------------------------------------------- teacher forcing

@dataclass
class _Cache:
    xs: np.ndarray
    XH: np.ndarray
    gates: np.ndarray      # (n, 4h) post-activation i, f, o, g
    C: np.ndarray          # (n, h)
    C_prev: np.ndarray     # (n, h)
    TC: np.ndarray         # tanh(C)
    Hd: np.ndarray         # dropped-out outputs fed to W_out
    drop: np.ndarray | None
    h_last: np.ndarray
    c_last: np.ndarray


def _run_window(p: LMParams, xs: np.ndarray, h0: np.ndarray, c0: np.ndarray,
                drop: np.ndarray | None) -> _Cache:
    n = len(xs)
    d, h = p.embed_dim, p.hidden_dim
    XH = np.empty((n, d + h))
    XH[:, :d] = p.emb[:, xs].T
    gates = np.empty((n, 4 * h))
    C = np.empty((n, h))
    C_prev = np.empty((n, h))
    TC = np.empty((n, h))
    Hs = np.empty((n, h))
    hp, cp = h0, c0
    W, b = p.W, p.b
    for t in range(n):
        XH[t, d:] = hp
        z = W @ XH[t] + b
        ifo = expit(z[:3 * h])
        g = np.tanh(z[3 * h:])
        gates[t, :3 * h] = ifo
        gates[t, 3 * h:] = g
        C_prev[t] = cp
        cp = ifo[h:2 * h] * cp + ifo[:h] * g
        C[t] = cp
        TC[t] = np.tanh(cp)
        hp = ifo[2 * h:3 * h] * TC[t]
        Hs[t] = hp
    Hd = Hs if drop is None else Hs * drop
    return _Cache(xs, XH, gates, C, C_prev, TC, Hd, drop, hp, cp)


def _target_positions(ys: np.ndarray, mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        raise ConfigError("mask allows no symbols")
    pos = np.full(mask.shape[0], -1)
    pos[idx] = np.arange(idx.size)
    tpos = pos[ys]
    if (tpos < 0).any():
        bad = int(ys[np.argmax(tpos < 0)])
        raise ConfigError(f"target symbol {bad} is outside the language mask")
    return idx, tpos


def _window_logprobs(p: LMParams, cache: _Cache, idx: np.ndarray) -> np.ndarray:
    Z = cache.Hd @ p.W_out[idx].T + p.b_out[idx]
    Z = Z - Z.max(axis=1, keepdims=True)
    return Z - np.log(np.exp(Z).sum(axis=1, keepdims=True))


def _windows(n: int, size: int | None):
    size = n if not size else size
    for start in range(0, n, size):
        yield start, min(n, start + size)


def _nll_parts(p: LMParams, seq: Sequence[int], mask: np.ndarray,
               window: int | None = None) -> tuple[float, float, int]:
    seq = np.asarray(seq, dtype=np.int64)
    if seq.size < 2:
        raise ConfigError("sequence needs at least a start and a terminator")
    xs, ys = seq[:-1], seq[1:]
    idx, tpos = _target_positions(ys, mask)
    counted = ys != seq[0]
    h = np.zeros(p.hidden_dim)
    c = np.zeros(p.hidden_dim)
    total = 0.0
    counted_nll = 0.0
    for a, b in _windows(len(xs), window):
        cache = _run_window(p, xs[a:b], h, c, None)
        lp = _window_logprobs(p, cache, idx)
        nll = -lp[np.arange(b - a), tpos[a:b]]
        total += float(nll.sum())
        counted_nll += float(nll[counted[a:b]].sum())
        h, c = cache.h_last, cache.c_last
    if not math.isfinite(total):
        _raise_nonfinite(p, "loss")
    return total, counted_nll, int(counted.sum())


def utterance_nll(p: LMParams, seq: Sequence[int], mask: np.ndarray,
                  window: int | None = None) -> tuple[float, int]:
    """Teacher-forced NLL of an encoded utterance.

    ``seq`` must start and end with the language's ``<sos>``.  Returns the
    NLL summed over all targets and the number of targets other than the
    sentence terminator (the perplexity token count).  ``window`` splits the
    pass into chunks with the recurrent state carried across.
    """
    total, _, count = _nll_parts(p, seq, mask, window)
    return total, count


def perplexity(p: LMParams, corpus: Iterable[Sequence[int]], mask: np.ndarray) -> float:
    """exp(mean NLL) over phoneme and space targets (terminators excluded)."""
    nll = 0.0
    count = 0
    for seq in corpus:
        _, c_nll, c = _nll_parts(p, seq, mask)
        nll += c_nll
        count += c
    if count == 0:
        raise ConfigError("no countable tokens for perplexity")
    return math.exp(nll / count)


# ---------------------------------------------------------------- gradients

def _zero_grads(p: LMParams) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in p.arrays().items()}


def _window_backward(p: LMParams, cache: _Cache, lp: np.ndarray, idx: np.ndarray,
                     tpos: np.ndarray, scale: float, grads: dict[str, np.ndarray]) -> None:
    n = len(cache.xs)
    d, h = p.embed_dim, p.hidden_dim
    dL = np.exp(lp)
    dL[np.arange(n), tpos] -= 1.0
    dL *= scale
    grads["W_out"][idx] += dL.T @ cache.Hd
    grads["b_out"][idx] += dL.sum(axis=0)
    dH = dL @ p.W_out[idx]
    if cache.drop is not None:
        dH *= cache.drop
    G = cache.gates
    dZ = np.empty((n, 4 * h))
    dh_next = np.zeros(h)
    dc_next = np.zeros(h)
    WT = p.W.T
    dE = np.empty((n, d))
    for t in range(n - 1, -1, -1):
        i = G[t, :h]
        f = G[t, h:2 * h]
        o = G[t, 2 * h:3 * h]
        g = G[t, 3 * h:]
        tc = cache.TC[t]
        dh = dH[t] + dh_next
        dc = dh * o * (1.0 - tc * tc) + dc_next
        dZ[t, :h] = dc * g * i * (1.0 - i)
        dZ[t, h:2 * h] = dc * cache.C_prev[t] * f * (1.0 - f)
        dZ[t, 2 * h:3 * h] = dh * tc * o * (1.0 - o)
        dZ[t, 3 * h:] = dc * i * (1.0 - g * g)
        dc_next = dc * f
        dxh = WT @ dZ[t]
        dE[t] = dxh[:d]
        dh_next = dxh[d:]
    grads["W"] += dZ.T @ cache.XH
    grads["b"] += dZ.sum(axis=0)
    np.add.at(grads["emb"].T, cache.xs, dE)


def utterance_grads(p: LMParams, seq: Sequence[int], mask: np.ndarray,
                    truncation: int | None = None, dropout: float = 0.0,
                    rng: np.random.Generator | None = None, scale: float = 1.0,
                    grads: dict[str, np.ndarray] | None = None):
    """Loss and (truncated) BPTT gradient of ``scale * total NLL``.

    Returns ``(total_nll, grads)`` where ``grads`` is keyed like
    :meth:`LMParams.arrays`.  Dropout masks are drawn once per window.
    """
    if grads is None:
        grads = _zero_grads(p)
    seq = np.asarray(seq, dtype=np.int64)
    xs, ys = seq[:-1], seq[1:]
    idx, tpos = _target_positions(ys, mask)
    h = np.zeros(p.hidden_dim)
    c = np.zeros(p.hidden_dim)
    total = 0.0
    for a, b in _windows(len(xs), truncation):
        drop = None
        if dropout > 0.0:
            keep = rng.random(p.hidden_dim) >= dropout
            drop = keep / (1.0 - dropout)
        cache = _run_window(p, xs[a:b], h, c, drop)
        lp = _window_logprobs(p, cache, idx)
        total += float(-lp[np.arange(b - a), tpos[a:b]].sum())
        _window_backward(p, cache, lp, idx, tpos[a:b], scale, grads)
        h, c = cache.h_last, cache.c_last
    return total, grads


def _grad_views(p: LMParams, grads: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    g = LMParams(grads["emb"], grads["W"], grads["b"], grads["W_out"], grads["b_out"])
    return g.blocks()


def grad_check_blocks(p: LMParams, seq: Sequence[int], mask: np.ndarray,
                      epsilon: float = 1e-5, coords_per_block: int = 20,
                      seed: int = 0, floor: float = 1e-6) -> dict[str, float]:
    """Max relative error per block between BPTT and central differences.

    Relative error is ``|a - n| / max(|a|, |n|, floor)``; ``floor`` keeps
    coordinates whose true gradient is zero from dividing roundoff by zero.
    Blocks smaller than ``coords_per_block`` are checked exhaustively.
    """
    rng = np.random.default_rng(seed)
    _, grads = utterance_grads(p, seq, mask, truncation=None)
    analytic = _grad_views(p, grads)
    out = {}
    for name, block in p.blocks().items():
        flat_n = block.size
        if flat_n <= coords_per_block:
            coords = np.arange(flat_n)
        else:
            coords = rng.choice(flat_n, size=coords_per_block, replace=False)
        worst = 0.0
        for k in coords:
            ix = np.unravel_index(k, block.shape)
            old = block[ix]
            block[ix] = old + epsilon
            fp = _nll_parts(p, seq, mask)[0]
            block[ix] = old - epsilon
            fm = _nll_parts(p, seq, mask)[0]
            block[ix] = old
            num = (fp - fm) / (2.0 * epsilon)
            a = analytic[name][ix]
            err = abs(a - num) / max(abs(a), abs(num), floor)
            worst = max(worst, err)
        out[name] = worst
    return out


def grad_check(p: LMParams, seq: Sequence[int], mask: np.ndarray,
               epsilon: float = 1e-5, **kw) -> float:
    return max(grad_check_blocks(p, seq, mask, epsilon, **kw).values())


# ---------------------------------------------------------------- optimisation

class _Optimizer:
    def __init__(self, p: LMParams, cfg: TrainConfig):
        self.cfg = cfg
        self.lr = cfg.lr
        self.t = 0
        self.m = _zero_grads(p)
        self.v = _zero_grads(p) if cfg.optimizer == "adam" else None

    def step(self, p: LMParams, grads: dict[str, np.ndarray]) -> None:
        cfg = self.cfg
        norm = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
        if norm > cfg.clip_norm:
            k = cfg.clip_norm / norm
            for g in grads.values():
                g *= k
        self.t += 1
        arrays = p.arrays()
        if cfg.optimizer == "adam":
            c1 = 1.0 - cfg.beta1 ** self.t
            c2 = 1.0 - cfg.beta2 ** self.t
            for k, g in grads.items():
                m, v = self.m[k], self.v[k]
                m *= cfg.beta1
                m += (1.0 - cfg.beta1) * g
                v *= cfg.beta2
                v += (1.0 - cfg.beta2) * g * g
                arrays[k] -= self.lr * (m / c1) / (np.sqrt(v / c2) + cfg.adam_eps)
        else:
            for k, g in grads.items():
                m = self.m[k]
                m *= cfg.momentum
                m += g
                arrays[k] -= self.lr * m


def _check_corpus(corpus, masks):
    for lang, seq in corpus:
        if lang not in masks:
            raise ConfigError(f"no mask for language {lang!r}")
        m = masks[lang]
        seq = np.asarray(seq)
        if seq.size < 2 or not m[seq].all():
            raise ConfigError(f"utterance contains symbols outside the {lang!r} mask")


def corpus_nll(p: LMParams, corpus, masks) -> tuple[float, int]:
    """Summed counted-token NLL and token count over ``(lang, seq)`` pairs."""
    nll = 0.0
    n = 0
    for lang, seq in corpus:
        _, c_nll, c = _nll_parts(p, seq, masks[lang])
        nll += c_nll
        n += c
    return nll, n


def train(corpus: Sequence[tuple[str, Sequence[int]]], alphabet, cfg: TrainConfig,
          heldout: Sequence[tuple[str, Sequence[int]]] | None = None,
          init: LMParams | None = None,
          on_epoch: Callable[[dict], None] | None = None) -> LMParams:
    """Masked-softmax training by truncated BPTT.

    ``corpus`` holds ``(language, encoded sequence)`` pairs; each utterance
    is trained against its own language mask.  With ``heldout`` the
    parameters of the best held-out epoch are returned (early stopping with
    ``cfg.patience``); otherwise the final parameters.
    """
    if not corpus:
        raise ConfigError("empty training corpus")
    masks = alphabet.masks
    _check_corpus(corpus, masks)
    if heldout:
        _check_corpus(heldout, masks)
    rng = np.random.default_rng(cfg.seed)
    if init is None:
        p = init_params(len(alphabet), cfg.embed_dim, cfg.hidden_dim, rng, alphabet.hash)
    else:
        if init.vocab_size != len(alphabet):
            raise ConfigError("initial parameters do not match the alphabet size")
        p = init.copy()
        p.alphabet_hash = alphabet.hash
    opt = _Optimizer(p, cfg)
    best, best_nll, bad_epochs = p.copy(), math.inf, 0
    last_good = best
    steps = 0
    n = len(corpus)
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(n) if cfg.shuffle else np.arange(n)
        epoch_nll = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = [corpus[j] for j in order[start:start + cfg.batch_size]]
            n_targets = sum(len(s) - 1 for _, s in batch)
            grads = _zero_grads(p)
            loss = 0.0
            for lang, seq in batch:
                l, _ = utterance_grads(p, seq, masks[lang], cfg.truncation, cfg.dropout,
                                       rng, 1.0 / n_targets, grads)
                loss += l
            if not math.isfinite(loss) or not all(np.isfinite(g).all() for g in grads.values()):
                raise NumericFailure("training diverged", block=p.nonfinite_block() or "loss",
                                     last_good=last_good)
            opt.step(p, grads)
            if not p.all_finite():
                raise NumericFailure("training diverged", block=p.nonfinite_block(),
                                     last_good=last_good)
            epoch_nll += loss
            steps += 1
            if cfg.max_steps is not None and steps >= cfg.max_steps:
                break
        record = {"epoch": epoch, "steps": steps, "train_nll": epoch_nll}
        stop = cfg.max_steps is not None and steps >= cfg.max_steps
        if heldout:
            dev_nll, dev_n = corpus_nll(p, heldout, masks)
            dev_nll /= max(dev_n, 1)
            record["dev_nll"] = dev_nll
            if dev_nll < best_nll:
                best, best_nll, bad_epochs = p.copy(), dev_nll, 0
            else:
                bad_epochs += 1
                if bad_epochs >= cfg.patience:
                    stop = True
        last_good = p.copy()
        opt.lr *= cfg.lr_decay
        if on_epoch is not None:
            on_epoch(record)
        if stop:
            break
    return best if heldout else p


def adapt(p: LMParams, a, a_new, target_corpus, cfg: TrainConfig,
          heldout=None) -> LMParams:
    """Carry ``p`` over to an extended alphabet and fine-tune on the target.

    Fresh symbols get rows initialised like a new model; the target corpus
    is trained under its own language mask only.
    """
    if p.alphabet_hash != a.hash:
        raise ConfigError("checkpoint was not trained on the given alphabet")
    if a_new.symbols[:len(a)] != a.symbols:
        raise ConfigError("target alphabet does not extend the source alphabet")
    rng = np.random.default_rng([cfg.seed, 1])
    grown = grow_params(p, len(a_new), rng, a_new.hash)
    return train(target_corpus, a_new, cfg, heldout=heldout, init=grown)


# ---------------------------------------------------------------- generation

def sample(p: LMParams, alphabet, lang: str, max_len: int = 200,
           temperature: float = 1.0, seed: int = 0) -> list[int]:
    """Ancestral sampling from ``<sos>`` until ``<sos>`` is produced again.

    The returned list excludes the start and terminator symbols; a
    temperature of 0 gives the greedy argmax rollout.
    """
    rng = np.random.default_rng(seed)
    mask = alphabet.mask(lang)
    sos = alphabet.sos_id(lang)
    idx = np.flatnonzero(mask)
    state = zero_state(p)
    x = sos
    out: list[int] = []
    for _ in range(max_len):
        logits, state = forward_step(p, state, x)
        if temperature <= 0.0:
            x = int(idx[np.argmax(logits[idx])])
        else:
            lp = masked_log_softmax(logits / temperature, mask)
            x = int(idx[rng.choice(idx.size, p=np.exp(lp) / np.exp(lp).sum())])
        if x == sos:
            break
        out.append(x)
    return out
