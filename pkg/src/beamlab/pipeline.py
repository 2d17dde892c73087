"""The differentiable joint path: mask net -> MVDR -> fbank -> AM -> CTC.

Forward and backward are written by hand. Real stages use ordinary
reverse-mode rules; the complex stages (masked PSDs, the loaded-inverse
ratio, trace normalization, the beamformer sum) use Wirtinger-calculus
adjoints under the convention

    g_Z = dL/d(Re Z) + i * dL/d(Im Z),    dL = Re <g_Z, dZ>,

with <A, B> = sum conj(A) * B. The two identities doing the heavy lifting
are d(A^-1) = -A^-1 dA A^-1 and the conjugate pairing of a real loss.

Numerical conventions shared with the rest of the package:
  * reference channel is selected once per utterance and treated as a
    constant (the argmax is not differentiated);
  * the diagonal-loading term added to Phi_NN is treated as constant in
    the adjoint (its trace dependence is orders below the verification
    tolerance; the finite-difference suite runs against the exact forward);
  * SpecAugment never appears on this path.
"""

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from . import backend as _backend
from .backend import AmParams, LabelSequence, am_backward, am_forward_cached, ctc_loss
from .beamform import MASK_EPS, load_noise_psd, masked_psd, select_reference
from .dsp import CMVN_VAR_FLOOR, LOG_FLOOR, Spectrogram, delta_features, \
    delta_features_adjoint, mel_filterbank

DEFAULT_SUBSAMPLE = 3
CHECKPOINT_VERSION = 1
# Denominator floor for finite-difference relative errors: differences below
# this scale are dominated by roundoff in the central difference itself.
REL_ERROR_FLOOR = 1e-5


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass
class MaskNetParams:
    """2-layer net from per-(t,f) log-magnitude context to a mask logit.

    Input is the (f-1, f, f+1) log-magnitude triple of the first channel
    (edges replicated); output is one sigmoid speech-mask logit.
    """

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        for name in ("w1", "b1", "w2", "b2"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            setattr(self, name, arr)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"mask-net parameter {name} must be finite")
        if self.w1.shape[0] != 3:
            raise ValueError("mask net consumes 3 log-magnitude context values")
        if self.w1.shape[1] != self.b1.shape[0]:
            raise ValueError("b1 must match w1 output dim")
        if self.w2.shape != (self.w1.shape[1], 1) or self.b2.shape != (1,):
            raise ValueError("second layer must map hidden -> 1 logit")


@dataclass
class TrainState:
    """Everything trainable plus bookkeeping; serializable to a checkpoint."""

    mask_params: MaskNetParams
    am_params: AmParams
    moments: dict = field(default_factory=dict)  # reserved; plain SGD keeps none
    step: int = 0
    seed: int = 0


@dataclass
class GradBundle:
    """Gradients mirroring TrainState's trainable arrays."""

    mask: dict
    am: dict

    def __post_init__(self):
        for group in (self.mask, self.am):
            for name, arr in group.items():
                if not np.all(np.isfinite(arr)):
                    raise ValueError(f"non-finite gradient for {name}")


def init_mask_params(rng: np.random.Generator, hidden_dim: int = 8) -> MaskNetParams:
    return MaskNetParams(
        w1=rng.normal(0.0, 1.0 / np.sqrt(3.0), size=(3, hidden_dim)),
        b1=np.zeros(hidden_dim),
        w2=rng.normal(0.0, 1.0 / np.sqrt(hidden_dim), size=(hidden_dim, 1)),
        b2=np.zeros(1),
    )


def init_train_state(
    rng: np.random.Generator,
    n_mels: int,
    vocab_size: int,
    am_hidden: int = 32,
    mask_hidden: int = 8,
    context: int = _backend.DEFAULT_CONTEXT,
    seed: int = 0,
) -> TrainState:
    """Fresh parameters; AM consumes fbank+delta+delta-delta (3*n_mels dims)."""
    mask_params = init_mask_params(rng, mask_hidden)
    am_params = _backend.init_am_params(rng, 3 * n_mels, am_hidden, vocab_size, context)
    return TrainState(mask_params=mask_params, am_params=am_params, seed=seed)


def zeros_bundle(state: TrainState) -> GradBundle:
    return GradBundle(
        mask={n: np.zeros_like(getattr(state.mask_params, n)) for n in ("w1", "b1", "w2", "b2")},
        am={n: np.zeros_like(getattr(state.am_params, n)) for n in ("w1", "b1", "w2", "b2")},
    )


def bundle_add(acc: GradBundle, other: GradBundle) -> None:
    """In-place acc += other (deterministic ordered sum)."""
    for name in acc.mask:
        acc.mask[name] += other.mask[name]
    for name in acc.am:
        acc.am[name] += other.am[name]


# ---------------------------------------------------------------------------
# Shared real-valued stages (used by both the joint and backend-only paths)
# ---------------------------------------------------------------------------


def _cmvn_forward(x: np.ndarray):
    mean = x.mean(axis=0)
    var = x.var(axis=0)
    sigma = np.sqrt(np.maximum(var, CMVN_VAR_FLOOR))
    y = (x - mean) / sigma
    active = var > CMVN_VAR_FLOOR  # variance branch of the max()
    return y, {"sigma": sigma, "active": active, "y": y}

def _cmvn_backward(g_y: np.ndarray, st: dict) -> np.ndarray:
    centered = g_y - g_y.mean(axis=0)
    correction = st["y"] * (g_y * st["y"]).mean(axis=0)
    return np.where(st["active"], centered - correction, centered) / st["sigma"]


def _feature_forward(xhat: np.ndarray, mel: np.ndarray, subsample_factor: int):
    """log-fbank -> cmvn -> deltas -> subsample on a [T, F] complex array."""
    power = np.abs(xhat) ** 2
    energies = power @ mel.T
    logf = np.log(energies + LOG_FLOOR)
    normed, cmvn_state = _cmvn_forward(logf)
    if normed.shape[0] < 5:
        raise ValueError("insufficient frames: deltas need >= 5 frames")
    d1 = delta_features(normed)
    d2 = delta_features(d1)
    feats = np.concatenate([normed, d1, d2], axis=1)
    sub = feats[::subsample_factor].copy()
    cache = {
        "xhat": xhat,
        "mel": mel,
        "energies": energies,
        "cmvn": cmvn_state,
        "n_frames": normed.shape[0],
        "subsample": subsample_factor,
    }
    return sub, cache


def _feature_backward(g_sub: np.ndarray, cache: dict) -> np.ndarray:
    """Returns g_xhat (complex, Wirtinger convention)."""
    t_full = cache["n_frames"]
    g_feats = np.zeros((t_full, g_sub.shape[1]))
    g_feats[:: cache["subsample"]] = g_sub
    n = g_feats.shape[1] // 3
    g_d1 = g_feats[:, n : 2 * n] + delta_features_adjoint(g_feats[:, 2 * n :])
    g_normed = g_feats[:, :n] + delta_features_adjoint(g_d1)
    g_logf = _cmvn_backward(g_normed, cache["cmvn"])
    g_energies = g_logf / (cache["energies"] + LOG_FLOOR)
    g_power = g_energies @ cache["mel"]
    return 2.0 * g_power * cache["xhat"]  # adjoint of |z|^2 for a real loss


# ---------------------------------------------------------------------------
# Back-end-only path (single-channel batches, pretraining)
# ---------------------------------------------------------------------------


def forward_backend(
    am_params: AmParams,
    spec: Spectrogram,
    labels: LabelSequence,
    subsample_factor: int = DEFAULT_SUBSAMPLE,
):
    """Single-channel loss: fbank -> cmvn -> deltas -> subsample -> AM -> CTC."""
    if spec.channels != 1:
        raise ValueError("backend path requires a single-channel spectrogram")
    n_mels = _n_mels_for(am_params)
    mel = mel_filterbank(n_mels, spec.freq_bins, spec.window_size, spec.sample_rate)
    feats, feat_cache = _feature_forward(spec.bins[:, :, 0], mel, subsample_factor)
    log_probs, am_cache = am_forward_cached(feats, am_params)
    loss, g_lattice = ctc_loss(log_probs, labels)
    cache = {
        "kind": "backend",
        "am_params": am_params,
        "feat": feat_cache,
        "am": am_cache,
        "g_lattice": g_lattice,
        "loss": loss,
    }
    return loss, cache


def backward_backend(cache: dict) -> dict:
    """AM parameter gradients for a forward_backend cache."""
    if cache.get("kind") != "backend":
        raise ValueError("cache was not produced by forward_backend")
    am_grads, _ = am_backward(cache["am_params"], cache["am"], cache["g_lattice"])
    return am_grads


def _n_mels_for(am_params: AmParams) -> int:
    if am_params.feat_dim % 3 != 0:
        raise ValueError("AM feature dim must be 3 * n_mels (fbank + deltas)")
    return am_params.feat_dim // 3


# ---------------------------------------------------------------------------
# Joint path forward
# ---------------------------------------------------------------------------


def mask_net_forward(mask_params: MaskNetParams, bins: np.ndarray):
    """Speech mask in (0,1) from channel-0 log magnitudes, [T, F]."""
    n_frames, n_bins = bins.shape[:2]
    power = np.abs(bins[:, :, 0]) ** 2
    logmag = 0.5 * np.log(power + LOG_FLOOR)  # smooth-floored log magnitude
    idx = np.clip(np.arange(n_bins)[:, None] + np.array([-1, 0, 1]), 0, n_bins - 1)
    ctx = logmag[:, idx].reshape(n_frames * n_bins, 3)
    hidden = np.tanh(ctx @ mask_params.w1 + mask_params.b1)
    logits = hidden @ mask_params.w2 + mask_params.b2
    mask = expit(logits).reshape(n_frames, n_bins)
    cache = {"ctx": ctx, "hidden": hidden, "mask": mask}
    return mask, cache


def _mask_net_backward(mask_params: MaskNetParams, cache: dict, g_mask: np.ndarray) -> dict:
    m = cache["mask"]
    g_logit = (g_mask * m * (1.0 - m)).reshape(-1, 1)
    g_w2 = cache["hidden"].T @ g_logit
    g_b2 = g_logit.sum(axis=0)
    g_hidden = g_logit @ mask_params.w2.T
    g_pre = g_hidden * (1.0 - cache["hidden"] ** 2)
    g_w1 = cache["ctx"].T @ g_pre
    g_b1 = g_pre.sum(axis=0)
    return {"w1": g_w1, "b1": g_b1, "w2": g_w2, "b2": g_b2}


def _psd_mask_grad(
    bins: np.ndarray, phi: np.ndarray, mask_sum: np.ndarray, g_phi: np.ndarray
) -> np.ndarray:
    """dL/dmask for phi = sum_t m x x^H / max(sum_t m, eps), given g_phi."""
    denom = np.maximum(mask_sum, MASK_EPS)
    quad = np.einsum("tfi,fij,tfj->tf", bins.conj(), g_phi, bins).real
    inner = np.einsum("fij,fij->f", g_phi.conj(), phi).real
    active = mask_sum > MASK_EPS  # denominator depends on the mask only here
    return (quad - np.where(active, inner, 0.0)[None, :]) / denom[None, :]


def forward_joint(
    state: TrainState,
    utt: Spectrogram,
    labels: LabelSequence,
    subsample_factor: int = DEFAULT_SUBSAMPLE,
    ref_channel: int | None = None,
    mask_override: float | None = None,
):
    """Joint loss L = -log p(l | Feature(x_hat)) plus the backward cache.

    ref_channel pins the reference microphone (otherwise select_reference
    chooses it from the speech PSD); mask_override clamps the speech mask to
    a constant, detaching the mask net (a test mode).
    """
    bins = utt.bins
    if bins.shape[2] < 1:
        raise ValueError("need at least one channel")
    if mask_override is not None:
        if not 0.0 < mask_override < 1.0:
            raise ValueError("mask_override must lie strictly in (0, 1)")
        mask = np.full(bins.shape[:2], float(mask_override))
        mask_cache = None
    else:
        mask, mask_cache = mask_net_forward(state.mask_params, bins)

    phi_ss = masked_psd(bins, mask)
    phi_nn = masked_psd(bins, 1.0 - mask)
    loaded = load_noise_psd(phi_nn)
    ratio = np.linalg.solve(loaded, phi_ss)
    trace = np.trace(ratio, axis1=1, axis2=2)
    weights = np.zeros_like(ratio)
    nonzero = trace != 0
    weights[nonzero] = ratio[nonzero] / trace[nonzero, None, None]
    ref = int(ref_channel) if ref_channel is not None else select_reference(phi_ss)
    if not 0 <= ref < bins.shape[2]:
        raise ValueError("ref channel out of range")
    h = weights[:, :, ref]
    xhat = np.einsum("fc,tfc->tf", h.conj(), bins)

    n_mels = _n_mels_for(state.am_params)
    mel = mel_filterbank(n_mels, utt.freq_bins, utt.window_size, utt.sample_rate)
    feats, feat_cache = _feature_forward(xhat, mel, subsample_factor)
    log_probs, am_cache = am_forward_cached(feats, state.am_params)
    loss, g_lattice = ctc_loss(log_probs, labels)

    cache = {
        "kind": "joint",
        "state": state,
        "bins": bins,
        "mask": mask,
        "mask_cache": mask_cache,
        "phi_ss": phi_ss,
        "phi_nn": phi_nn,
        "loaded": loaded,
        "ratio": ratio,
        "trace": trace,
        "nonzero": nonzero,
        "ref": ref,
        "h": h,
        "feat": feat_cache,
        "am": am_cache,
        "g_lattice": g_lattice,
        "loss": loss,
    }
    return loss, cache


# ---------------------------------------------------------------------------
# Joint path backward
# ---------------------------------------------------------------------------


def backward_joint(cache: dict) -> GradBundle:
    """Exact reverse-mode gradients for every trainable array."""
    if cache.get("kind") != "joint":
        raise ValueError("cache was not produced by forward_joint")
    state = cache["state"]
    bins = cache["bins"]

    # Back-end and feature stages (real-valued until |z|^2).
    am_grads, g_feats = am_backward(state.am_params, cache["am"], cache["g_lattice"])
    g_xhat = _feature_backward(g_feats, cache["feat"])

    # x_hat(t,f) = h(f)^H x(t,f):  g_h[f,c] = sum_t conj(g_xhat) * x.
    g_h = np.einsum("tf,tfc->fc", g_xhat.conj(), bins)

    # h = W[:, :, ref]; scatter into the ref column.
    g_weights = np.zeros_like(cache["ratio"])
    g_weights[:, :, cache["ref"]] = g_h

    # W = G / tr(G):  g_G = g_W / conj(tau) - conj(<g_W, G> / tau^2) * I.
    tau = cache["trace"]
    ratio = cache["ratio"]
    nonzero = cache["nonzero"]
    g_ratio = np.zeros_like(ratio)
    inner = np.einsum("fij,fij->f", g_weights.conj(), ratio)
    diag_term = np.conj(inner / np.where(nonzero, tau, 1.0) ** 2)
    g_ratio[nonzero] = g_weights[nonzero] / np.conj(tau[nonzero, None, None])
    idx = np.arange(ratio.shape[1])
    g_ratio[:, idx, idx] -= np.where(nonzero, diag_term, 0.0)[:, None]

    # G = A^-1 B with A = loaded noise PSD (Hermitian), B = speech PSD:
    #   g_B = A^-H g_G,   g_A = -g_B G^H.
    g_phi_ss = np.linalg.solve(cache["loaded"], g_ratio)
    g_phi_nn = -g_phi_ss @ ratio.conj().transpose(0, 2, 1)
    # Diagonal loading is treated as a constant shift: g passes through.

    # Masked PSDs: d(phi)/d(mask), noise mask = 1 - speech mask.
    mask = cache["mask"]
    g_mask = _psd_mask_grad(bins, cache["phi_ss"], mask.sum(axis=0), g_phi_ss)
    g_mask -= _psd_mask_grad(bins, cache["phi_nn"], (1.0 - mask).sum(axis=0), g_phi_nn)

    if cache["mask_cache"] is None:  # clamped masks: net detached
        mask_grads = {n: np.zeros_like(getattr(state.mask_params, n))
                      for n in ("w1", "b1", "w2", "b2")}
    else:
        mask_grads = _mask_net_backward(state.mask_params, cache["mask_cache"], g_mask)
    return GradBundle(mask=mask_grads, am=am_grads)


# ---------------------------------------------------------------------------
# Finite-difference verification
# ---------------------------------------------------------------------------


def central_difference(loss_fn, array: np.ndarray, index, epsilon: float) -> float:
    """Central difference of loss_fn w.r.t. array[index], restoring the entry."""
    original = array[index]
    array[index] = original + epsilon
    plus = loss_fn()
    array[index] = original - epsilon
    minus = loss_fn()
    array[index] = original
    return (plus - minus) / (2.0 * epsilon)


def _relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), REL_ERROR_FLOOR)


def finite_diff_check(
    state: TrainState,
    utt: Spectrogram,
    labels: LabelSequence,
    epsilon: float = 1e-5,
    subsample_factor: int = DEFAULT_SUBSAMPLE,
    breakdown: dict | None = None,
    corrupt_adjoint: bool = False,
) -> float:
    """Worst relative error of backward_joint vs central differences.

    Every entry of every trainable array is perturbed; the reference channel
    is pinned to the unperturbed selection so the argmax cannot flip between
    the two sides of a difference. Pass a dict as `breakdown` to receive the
    worst error per parameter array. corrupt_adjoint deliberately shifts one
    analytic gradient entry first — a negative control that must fail.
    """
    if epsilon <= 0.0 or not np.isfinite(epsilon):
        raise ValueError("invalid epsilon: must be a positive finite step")
    loss0, cache = forward_joint(state, utt, labels, subsample_factor)
    if not np.isfinite(loss0):
        raise ValueError("non-finite loss at the evaluation point")
    bundle = backward_joint(cache)
    if corrupt_adjoint:
        bundle.am["b2"][0] += 1.0
    ref = cache["ref"]

    def loss_fn():
        loss, _ = forward_joint(state, utt, labels, subsample_factor, ref_channel=ref)
        return loss

    worst = 0.0
    groups = [
        ("mask", state.mask_params, bundle.mask),
        ("am", state.am_params, bundle.am),
    ]
    for group_name, params, grads in groups:
        for name in ("w1", "b1", "w2", "b2"):
            array = getattr(params, name)
            analytic = grads[name]
            group_worst = 0.0
            for index in np.ndindex(array.shape):
                numeric = central_difference(loss_fn, array, index, epsilon)
                group_worst = max(group_worst, _relative_error(analytic[index], numeric))
            if breakdown is not None:
                breakdown[f"{group_name}.{name}"] = group_worst
            worst = max(worst, group_worst)
    return worst


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(state: TrainState, path) -> None:
    """JSON container; float64 survives the round trip exactly."""
    payload = {
        "checkpoint_version": CHECKPOINT_VERSION,
        "step": state.step,
        "seed": state.seed,
        "moments": {k: np.asarray(v).tolist() for k, v in state.moments.items()},
        "mask_params": {n: getattr(state.mask_params, n).tolist()
                        for n in ("w1", "b1", "w2", "b2")},
        "am_params": {
            **{n: getattr(state.am_params, n).tolist() for n in ("w1", "b1", "w2", "b2")},
            "context": state.am_params.context,
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_checkpoint(path) -> TrainState:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    version = payload.get("checkpoint_version")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version: {version}")
    try:
        mp = payload["mask_params"]
        ap = payload["am_params"]
        mask_params = MaskNetParams(
            w1=np.asarray(mp["w1"]), b1=np.asarray(mp["b1"]),
            w2=np.asarray(mp["w2"]), b2=np.asarray(mp["b2"]),
        )
        am_params = AmParams(
            w1=np.asarray(ap["w1"]), b1=np.asarray(ap["b1"]),
            w2=np.asarray(ap["w2"]), b2=np.asarray(ap["b2"]),
            context=int(ap["context"]),
        )
        return TrainState(
            mask_params=mask_params,
            am_params=am_params,
            moments={k: np.asarray(v) for k, v in payload["moments"].items()},
            step=int(payload["step"]),
            seed=int(payload["seed"]),
        )
    except KeyError as exc:
        raise ValueError(f"corrupted checkpoint: missing field {exc}") from None
