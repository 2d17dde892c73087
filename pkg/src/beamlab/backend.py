"""Acoustic back-end: context-window feed-forward AM, CTC loss, decoding.

The acoustic model is a deliberately small 2-layer net over +-3-frame
context windows (affine -> tanh -> affine -> log-softmax). CTC is the plain
node-potential objective; the forward-backward recursions run entirely in
log space with blank id 0 and no rescaling.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

BLANK_ID = 0
ROW_NORM_TOL = 1e-6
DEFAULT_CONTEXT = 3
NEG_INF = -np.inf


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass
class LabelSequence:
    """Token ids over a vocabulary of size `vocab_size`, blank (0) excluded."""

    ids: np.ndarray
    vocab_size: int
    text: str | None = None

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int64)
        if self.ids.ndim != 1:
            raise ValueError("label ids must be a 1-D sequence")
        if self.vocab_size < 1:
            raise ValueError("vocab_size must be >= 1")
        if self.ids.size and (self.ids.min() < 1 or self.ids.max() > self.vocab_size):
            raise ValueError("label ids must lie in [1, vocab_size]; 0 is the blank")

    def __len__(self) -> int:
        return int(self.ids.size)


@dataclass
class LogProbLattice:
    """Per-frame log-probabilities, values [T, vocab_size + 1]."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError("lattice must be [frames, symbols]")
        row_norm = logsumexp(self.values, axis=1)
        if not np.all(np.abs(row_norm) <= ROW_NORM_TOL):
            raise ValueError("lattice rows must log-sum-exp to 0")

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]

    @property
    def n_symbols(self) -> int:
        return self.values.shape[1]


@dataclass
class AmParams:
    """Weights of the 2-layer context-window net.

    w1: [(2*context+1)*feat_dim, hidden], w2: [hidden, vocab_size+1].
    """

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    context: int = DEFAULT_CONTEXT

    def __post_init__(self):
        for name in ("w1", "b1", "w2", "b2"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            setattr(self, name, arr)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"AM parameter {name} must be finite")
        if self.w1.shape[1] != self.b1.shape[0] or self.w2.shape[1] != self.b2.shape[0]:
            raise ValueError("bias shapes must match weight output dims")
        if self.w1.shape[1] != self.w2.shape[0]:
            raise ValueError("hidden dims of the two layers must agree")
        if self.context < 0:
            raise ValueError("context must be >= 0")
        if self.w1.shape[0] % (2 * self.context + 1) != 0:
            raise ValueError("w1 input dim must be a multiple of the window length")

    @property
    def feat_dim(self) -> int:
        return self.w1.shape[0] // (2 * self.context + 1)

    @property
    def n_symbols(self) -> int:
        return self.w2.shape[1]


def init_am_params(
    rng: np.random.Generator,
    feat_dim: int,
    hidden_dim: int,
    vocab_size: int,
    context: int = DEFAULT_CONTEXT,
) -> AmParams:
    """Gaussian init scaled by 1/sqrt(fan_in); biases zero."""
    in_dim = (2 * context + 1) * feat_dim
    out_dim = vocab_size + 1
    return AmParams(
        w1=rng.normal(0.0, 1.0 / np.sqrt(in_dim), size=(in_dim, hidden_dim)),
        b1=np.zeros(hidden_dim),
        w2=rng.normal(0.0, 1.0 / np.sqrt(hidden_dim), size=(hidden_dim, out_dim)),
        b2=np.zeros(out_dim),
        context=context,
    )


# ---------------------------------------------------------------------------
# Context windows
# ---------------------------------------------------------------------------


def _context_indices(n_frames: int, context: int) -> np.ndarray:
    stencil = np.arange(-context, context + 1)
    return np.clip(np.arange(n_frames)[:, None] + stencil[None, :], 0, n_frames - 1)


def context_window(features: np.ndarray, context: int) -> np.ndarray:
    """Stack +-context frames per row (edges replicated), [T, (2c+1)*D]."""
    features = np.asarray(features, dtype=np.float64)
    idx = _context_indices(features.shape[0], context)
    return features[idx].reshape(features.shape[0], -1)


def context_window_adjoint(grad: np.ndarray, n_frames: int, context: int) -> np.ndarray:
    """Exact transpose of context_window: scatter-add back onto frames."""
    width = 2 * context + 1
    feat_dim = grad.shape[1] // width
    idx = _context_indices(n_frames, context)
    out = np.zeros((n_frames, feat_dim))
    np.add.at(out, idx.ravel(), grad.reshape(-1, feat_dim))
    return out


# ---------------------------------------------------------------------------
# Acoustic model forward / backward
# ---------------------------------------------------------------------------


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    return logits - logsumexp(logits, axis=1, keepdims=True)


def am_forward_cached(features: np.ndarray, params: AmParams):
    """Raw AM forward returning (log_probs, cache for am_backward)."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2:
        raise ValueError("features must be [frames, dims]")
    if features.shape[1] * (2 * params.context + 1) != params.w1.shape[0]:
        raise ValueError("feature dimension does not match AM parameters")
    ctx = context_window(features, params.context)
    hidden = np.tanh(ctx @ params.w1 + params.b1)
    logits = hidden @ params.w2 + params.b2
    log_probs = _log_softmax(logits)
    cache = {"n_frames": features.shape[0], "ctx": ctx, "hidden": hidden,
             "log_probs": log_probs}
    return log_probs, cache


def am_forward(features, params: AmParams) -> LogProbLattice:
    """Context-windowed affine -> tanh -> affine -> log-softmax per frame."""
    values = features.values if hasattr(features, "values") else features
    log_probs, _ = am_forward_cached(values, params)
    return LogProbLattice(values=log_probs)


def am_backward(params: AmParams, cache: dict, g_log_probs: np.ndarray):
    """Reverse pass through the AM.

    Returns (param_grads dict with keys w1/b1/w2/b2, g_features).
    """
    softmax = np.exp(cache["log_probs"])
    g_logits = g_log_probs - softmax * g_log_probs.sum(axis=1, keepdims=True)
    g_w2 = cache["hidden"].T @ g_logits
    g_b2 = g_logits.sum(axis=0)
    g_hidden = g_logits @ params.w2.T
    g_pre = g_hidden * (1.0 - cache["hidden"] ** 2)
    g_w1 = cache["ctx"].T @ g_pre
    g_b1 = g_pre.sum(axis=0)
    g_ctx = g_pre @ params.w1.T
    g_features = context_window_adjoint(g_ctx, cache["n_frames"], params.context)
    return {"w1": g_w1, "b1": g_b1, "w2": g_w2, "b2": g_b2}, g_features


# ---------------------------------------------------------------------------
# CTC loss (log-space forward-backward)
# ---------------------------------------------------------------------------


def _extend_labels(ids: np.ndarray) -> np.ndarray:
    """Interleave blanks: l -> [0, l1, 0, l2, ..., 0]."""
    ext = np.zeros(2 * ids.size + 1, dtype=np.int64)
    ext[1::2] = ids
    return ext


def min_frames(ids: np.ndarray) -> int:
    """Shortest feasible path length: |l| plus one blank per adjacent repeat."""
    ids = np.asarray(ids)
    repeats = int(np.sum(ids[1:] == ids[:-1])) if ids.size > 1 else 0
    return int(ids.size) + repeats


def ctc_loss(lattice, labels) -> tuple[float, np.ndarray]:
    """Exact CTC negative log-likelihood and its lattice gradient.

    The gradient treats every lattice entry as a free variable (no softmax
    coupling), so it is the plain adjoint of the forward-backward sum.
    """
    log_probs = lattice.values if isinstance(lattice, LogProbLattice) else np.asarray(
        lattice, dtype=np.float64)
    ids = labels.ids if isinstance(labels, LabelSequence) else np.asarray(
        labels, dtype=np.int64)
    n_frames, n_symbols = log_probs.shape
    if ids.size and (ids.min() < 1 or ids.max() >= n_symbols):
        raise ValueError("label ids must lie in [1, n_symbols - 1]")
    if n_frames < min_frames(ids):
        raise ValueError("no valid alignment: label too long for the lattice")

    ext = _extend_labels(ids)
    n_states = ext.size
    lp = log_probs[:, ext]  # [T, S] emission scores per extended state
    # States allowed to skip from s-2: non-blank and different from l'_{s-2}.
    can_skip = np.zeros(n_states, dtype=bool)
    if n_states > 2:
        can_skip[2:] = (ext[2:] != BLANK_ID) & (ext[2:] != ext[:-2])

    alpha = np.full((n_frames, n_states), NEG_INF)
    alpha[0, 0] = lp[0, 0]
    if n_states > 1:
        alpha[0, 1] = lp[0, 1]
    for t in range(1, n_frames):
        prev = alpha[t - 1]
        stay = prev
        step = np.concatenate(([NEG_INF], prev[:-1]))
        acc = np.logaddexp(stay, step)
        if n_states > 2:
            skip = np.concatenate(([NEG_INF, NEG_INF], prev[:-2]))
            acc = np.where(can_skip, np.logaddexp(acc, skip), acc)
        alpha[t] = acc + lp[t]

    tail = alpha[n_frames - 1, n_states - 1]
    if n_states > 1:
        tail = np.logaddexp(tail, alpha[n_frames - 1, n_states - 2])
    loss = -float(tail)

    beta = np.full((n_frames, n_states), NEG_INF)
    beta[n_frames - 1, n_states - 1] = lp[n_frames - 1, n_states - 1]
    if n_states > 1:
        beta[n_frames - 1, n_states - 2] = lp[n_frames - 1, n_states - 2]
    for t in range(n_frames - 2, -1, -1):
        nxt = beta[t + 1]
        stay = nxt
        step = np.concatenate((nxt[1:], [NEG_INF]))
        acc = np.logaddexp(stay, step)
        if n_states > 2:
            skip = np.concatenate((nxt[2:], [NEG_INF, NEG_INF]))
            allowed = np.zeros(n_states, dtype=bool)
            allowed[: n_states - 2] = can_skip[2:]
            acc = np.where(allowed, np.logaddexp(acc, skip), acc)
        beta[t] = acc + lp[t]

    # alpha*beta counts the emission at (t, s) twice; collapse states by
    # symbol, then dL/d log_probs[t,k] = -exp(lse - lp - log p).
    gamma = alpha + beta  # [T, S]
    grad_log = np.full((n_frames, n_symbols), NEG_INF)
    for s in range(n_states):
        k = ext[s]
        grad_log[:, k] = np.logaddexp(grad_log[:, k], gamma[:, s])
    grad = -np.exp(grad_log - log_probs + loss)
    return loss, grad


# ---------------------------------------------------------------------------
# Decoding and scoring
# ---------------------------------------------------------------------------


def collapse_path(path: np.ndarray) -> np.ndarray:
    """The B mapping: drop consecutive repeats, then blanks."""
    path = np.asarray(path, dtype=np.int64)
    if path.size == 0:
        return path
    keep = np.concatenate(([True], path[1:] != path[:-1]))
    dedup = path[keep]
    return dedup[dedup != BLANK_ID]


def greedy_decode(lattice) -> LabelSequence:
    """Per-frame argmax followed by the B mapping."""
    values = lattice.values if isinstance(lattice, LogProbLattice) else np.asarray(lattice)
    path = np.argmax(values, axis=1)
    return LabelSequence(ids=collapse_path(path), vocab_size=values.shape[1] - 1)


def edit_distance(hyp, ref) -> tuple[int, int, int]:
    """Levenshtein (sub, ins, del) counts, hyp against ref, unit costs.

    Ties in total cost break deterministically: substitution is preferred
    over an insertion+deletion pair, and deletion over insertion.
    """
    h = list(hyp.ids) if isinstance(hyp, LabelSequence) else list(hyp)
    r = list(ref.ids) if isinstance(ref, LabelSequence) else list(ref)
    # dp[i][j] = (total, sub, ins, del) aligning h[:i] with r[:j].
    dp = [[None] * (len(r) + 1) for _ in range(len(h) + 1)]
    dp[0][0] = (0, 0, 0, 0)
    for i in range(1, len(h) + 1):
        t, s, n, d = dp[i - 1][0]
        dp[i][0] = (t + 1, s, n + 1, d)
    for j in range(1, len(r) + 1):
        t, s, n, d = dp[0][j - 1]
        dp[0][j] = (t + 1, s, n, d + 1)
    for i in range(1, len(h) + 1):
        for j in range(1, len(r) + 1):
            t, s, n, d = dp[i - 1][j - 1]
            hit = h[i - 1] == r[j - 1]
            cand = [(t + (0 if hit else 1), s + (0 if hit else 1), n, d)]
            t, s, n, d = dp[i][j - 1]
            cand.append((t + 1, s, n, d + 1))
            t, s, n, d = dp[i - 1][j]
            cand.append((t + 1, s, n + 1, d))
            dp[i][j] = min(cand, key=lambda c: c[0])
    _, sub, ins, dele = dp[len(h)][len(r)]
    return sub, ins, dele


# ---------------------------------------------------------------------------
# Vocabulary files
# ---------------------------------------------------------------------------


def load_vocab(path) -> list[str]:
    """One token per line; the token on line i (1-based) gets id i.

    Id 0 is the reserved blank and never appears in the file.
    """
    tokens = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            token = line.strip()
            if not token:
                continue
            if token in tokens:
                raise ValueError(f"duplicate token '{token}' in vocabulary")
            tokens.append(token)
    if not tokens:
        raise ValueError("vocabulary file is empty")
    return tokens


def tokens_to_ids(text: str, tokens: list[str]) -> np.ndarray:
    lookup = {tok: i + 1 for i, tok in enumerate(tokens)}
    try:
        return np.asarray([lookup[t] for t in text.split()], dtype=np.int64)
    except KeyError as exc:
        raise ValueError(f"token {exc} not in vocabulary") from None


def ids_to_tokens(ids, tokens: list[str]) -> str:
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 1 or ids.max() > len(tokens)):
        raise ValueError("id out of vocabulary range")
    return " ".join(tokens[i - 1] for i in ids)
