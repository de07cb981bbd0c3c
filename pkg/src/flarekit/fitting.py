"""Direct per-image optimization of a LUT bank against a ground truth.

The objective is the pixel term plus the flare suppression term
(lambda_l1 * L1 + lambda_f * masked L1, penalty mask built from the
ground truth). Gradients are analytic: each pixel touches exactly the
two control points bracketing its input value with weights (1 - t) and
t; the hue chain goes through the circular-mean fusion and the hexcone
HSV->RGB map; fusion weights are treated as free variables and
projected back onto the simplex (clip at zero, renormalize) after every
step. ``finite_diff_gradient`` is the central-difference oracle used by
the tests.

Everything is deterministic: identity initialization, fixed backtracking
line search (halve the base step until the loss strictly decreases, up
to 20 halvings), stop on relative tolerance or iteration budget.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .color import hsv_to_rgb, rgb_to_hsv
from .luts import (
    CIRCULAR,
    LINEAR,
    Lut1D,
    LutBank,
    LutSet,
    correct_hsv,
    identity_bank,
    identity_lut,
    lut_segments,
    wrap_delta,
)
from .metrics import LossWeights, MetricsReport, compute_report, penalty_mask
from .synthesis import FlareSample

TWO_PI = 2.0 * np.pi

# |out - gt| below half an 8-bit quantization step is treated as a kink
# of the L1 terms: such residuals are invisible after PNG quantization,
# central finite differences straddling them report ~0, and pursuing
# them would let float noise dominate the descent direction.
KINK_EPS = 0.5 / 255.0


def _fit_loss_weights() -> LossWeights:
    return LossWeights(lambda_l1=1.0, lambda_p=0.0, lambda_f=2.0, lambda_q=0.0)


@dataclass(frozen=True)
class FitConfig:
    n_l: int = 1
    s_lut: int = 33
    weights: LossWeights = field(default_factory=_fit_loss_weights)
    step: float = 0.05
    max_iters: int = 500
    tol: float = 1e-6
    seed: int = 0
    # residual dead-zone; shrink toward 0 when fitting float targets that
    # never pass through 8-bit files
    kink_eps: float = KINK_EPS

    def __post_init__(self):
        if self.step <= 0:
            raise ValueError("step must be > 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.kink_eps < 0:
            raise ValueError("kink_eps must be >= 0")


@dataclass
class BankGradient:
    """Objective gradient, laid out like the bank: (N_L, S_LUT) per channel."""

    h: np.ndarray
    s: np.ndarray
    v: np.ndarray
    weights: np.ndarray

    def scaled(self, c: float) -> "BankGradient":
        return BankGradient(self.h * c, self.s * c, self.v * c, self.weights * c)


@dataclass
class FitResult:
    bank: LutBank
    loss_trace: list[float]
    step_trace: list[float]
    metrics: MetricsReport


def _rgb_jacobian(h_frac: np.ndarray, s: np.ndarray, v: np.ndarray):
    """Partials of the hexcone HSV->RGB map wrt (hue fraction, s, v).

    Returns (d_dh, d_ds, d_dv), each (H, W, 3) over the RGB channels.
    """
    h6 = (h_frac % 1.0) * 6.0
    k = np.floor(h6).astype(int) % 6
    f = h6 - np.floor(h6)

    zero = np.zeros_like(s)
    one = np.ones_like(s)
    vs6 = 6.0 * v * s
    # component order: v, q, p, t
    dh = [zero, -vs6, zero, vs6]
    ds_ = [zero, -v * f, -v, -v * (1.0 - f)]
    dv = [one, 1.0 - s * f, 1.0 - s, 1.0 - s * (1.0 - f)]

    comp_r = np.choose(k, [0, 1, 2, 2, 3, 0])
    comp_g = np.choose(k, [3, 0, 0, 1, 2, 2])
    comp_b = np.choose(k, [2, 2, 3, 0, 0, 1])

    def gather(parts):
        return np.stack(
            [np.choose(comp_r, parts), np.choose(comp_g, parts), np.choose(comp_b, parts)],
            axis=-1,
        )

    return gather(dh), gather(ds_), gather(dv)


class _FitProblem:
    """Fixed (input, target, mask) context for repeated loss/gradient evals."""

    def __init__(self, input_hsv, gt, loss_weights, mask=None, kink_eps=KINK_EPS):
        input_hsv = np.asarray(input_hsv, dtype=float)
        self.input_hsv = input_hsv
        self.h_frac = input_hsv[..., 0] / 360.0
        self.s_in = input_hsv[..., 1]
        self.v_in = input_hsv[..., 2]
        self.gt = np.asarray(gt, dtype=float)
        self.mask = penalty_mask(self.gt) if mask is None else np.asarray(mask, dtype=float)
        self.lw = loss_weights
        self.kink_eps = kink_eps
        self._segs = {}

    def _segments(self, channel: str, s_lut: int):
        key = (channel, s_lut)
        if key not in self._segs:
            if channel == "h":
                lut = identity_lut(s_lut, CIRCULAR)
                plane = self.h_frac
            else:
                lut = identity_lut(s_lut, LINEAR)
                plane = self.s_in if channel == "s" else self.v_in
            idx, nxt, t, _ = lut_segments(plane, lut)
            self._segs[key] = (idx, nxt, t)
        return self._segs[key]

    def output(self, bank: LutBank) -> np.ndarray:
        return hsv_to_rgb(correct_hsv(self.input_hsv, bank))

    def loss(self, bank: LutBank) -> float:
        out = self.output(bank)
        err = np.abs(out - self.gt)
        l1 = float(err.mean())
        lf = float((self.mask[..., None] * err).mean())
        return self.lw.lambda_l1 * l1 + self.lw.lambda_f * lf

    def gradient(self, bank: LutBank, with_costs: bool = False):
        """Analytic objective gradient; optionally also the kink-cost rates.

        Pixels whose residual sits inside the KINK_EPS dead-zone are at a
        kink of the L1 terms: they contribute nothing to the gradient, but
        any parameter move that displaces them grows the loss at a rate
        the subgradient cannot see. ``with_costs=True`` additionally
        returns those first-order cost rates per parameter, so the caller
        can restrict the descent direction to parameters whose gain rate
        provably exceeds their kink cost.
        """
        n_l = len(bank.sets)
        s_lut = bank.sets[0].h.values.size
        w = bank.weights

        idx_h, nxt_h, t_h = self._segments("h", s_lut)
        idx_s, nxt_s, t_s = self._segments("s", s_lut)
        idx_v, nxt_v, t_v = self._segments("v", s_lut)

        h_set = np.empty((n_l,) + self.h_frac.shape)
        s_set = np.empty_like(h_set)
        v_set = np.empty_like(h_set)
        s_active = np.empty(h_set.shape, dtype=bool)
        v_active = np.empty(h_set.shape, dtype=bool)
        for i, ls in enumerate(bank.sets):
            base = ls.h.values % 1.0
            delta = wrap_delta(base[nxt_h] - base[idx_h])
            h_set[i] = (base[idx_h] + t_h * delta) % 1.0
            s_pre = ls.s.values[idx_s] * (1.0 - t_s) + ls.s.values[nxt_s] * t_s
            v_pre = ls.v.values[idx_v] * (1.0 - t_v) + ls.v.values[nxt_v] * t_v
            s_active[i] = (s_pre >= 0.0) & (s_pre <= 1.0)
            v_active[i] = (v_pre >= 0.0) & (v_pre <= 1.0)
            s_set[i] = np.clip(s_pre, 0.0, 1.0)
            v_set[i] = np.clip(v_pre, 0.0, 1.0)

        theta = TWO_PI * h_set
        cos_t = np.cos(theta)
        sin_t = np.sin(theta)
        res_c = np.tensordot(w, cos_t, axes=1)
        res_s = np.tensordot(w, sin_t, axes=1)
        mag2 = res_c * res_c + res_s * res_s
        live = mag2 > 0.0
        h_fin = np.where(live, (np.arctan2(res_s, res_c) / TWO_PI) % 1.0, self.h_frac)
        s_fin = np.tensordot(w, s_set, axes=1)
        v_fin = np.tensordot(w, v_set, axes=1)

        out = hsv_to_rgb(np.stack([(h_fin * 360.0) % 360.0, s_fin, v_fin], axis=-1))
        diff = out - self.gt
        at_kink = np.abs(diff) <= self.kink_eps
        sign = np.where(at_kink, 0.0, np.sign(diff))
        sample_w = (self.lw.lambda_l1 + self.lw.lambda_f * self.mask[..., None]) / diff.size
        g_rgb = sample_w * sign

        d_dh, d_ds, d_dv = _rgb_jacobian(h_fin, s_fin, v_fin)
        g_h_fin = (g_rgb * d_dh).sum(axis=-1)
        g_s_fin = (g_rgb * d_ds).sum(axis=-1)
        g_v_fin = (g_rgb * d_dv).sum(axis=-1)

        safe_mag2 = np.where(live, mag2, 1.0)

        def scatter(plane_idx, plane_nxt, plane_t, values):
            acc = np.bincount(plane_idx.ravel(), (values * (1.0 - plane_t)).ravel(), minlength=s_lut)
            acc += np.bincount(plane_nxt.ravel(), (values * plane_t).ravel(), minlength=s_lut)
            return acc

        gh = np.zeros((n_l, s_lut))
        gs = np.zeros((n_l, s_lut))
        gv = np.zeros((n_l, s_lut))
        gw = np.zeros(n_l)
        if with_costs:
            # first-order loss growth per unit parameter move, from samples
            # currently sitting on an L1 kink
            k_rgb = sample_w * at_kink
            c_h_fin = (k_rgb * np.abs(d_dh)).sum(axis=-1)
            c_s_fin = (k_rgb * np.abs(d_ds)).sum(axis=-1)
            c_v_fin = (k_rgb * np.abs(d_dv)).sum(axis=-1)
            ch = np.zeros((n_l, s_lut))
            cs = np.zeros((n_l, s_lut))
            cv = np.zeros((n_l, s_lut))
            cw = np.zeros(n_l)
        for i in range(n_l):
            hue_resp = (res_c * cos_t[i] + res_s * sin_t[i]) / safe_mag2
            w_resp = (res_c * sin_t[i] - res_s * cos_t[i]) / (TWO_PI * safe_mag2)
            g_si = g_s_fin * w[i] * s_active[i]
            g_vi = g_v_fin * w[i] * v_active[i]
            g_hi = np.where(live, g_h_fin * w[i] * hue_resp, 0.0)
            gs[i] = scatter(idx_s, nxt_s, t_s, g_si)
            gv[i] = scatter(idx_v, nxt_v, t_v, g_vi)
            gh[i] = scatter(idx_h, nxt_h, t_h, g_hi)
            g_wh = np.where(live, g_h_fin * w_resp, 0.0)
            gw[i] = float((g_s_fin * s_set[i]).sum() + (g_v_fin * v_set[i]).sum() + g_wh.sum())
            if with_costs:
                c_si = c_s_fin * w[i] * s_active[i]
                c_vi = c_v_fin * w[i] * v_active[i]
                c_hi = np.where(live, c_h_fin * w[i] * np.abs(hue_resp), 0.0)
                cs[i] = scatter(idx_s, nxt_s, t_s, c_si)
                cv[i] = scatter(idx_v, nxt_v, t_v, c_vi)
                ch[i] = scatter(idx_h, nxt_h, t_h, c_hi)
                c_wh = np.where(live, c_h_fin * np.abs(w_resp), 0.0)
                cw[i] = float(
                    (c_s_fin * s_set[i]).sum() + (c_v_fin * v_set[i]).sum() + c_wh.sum()
                )
        grad = BankGradient(h=gh, s=gs, v=gv, weights=gw)
        if with_costs:
            return grad, BankGradient(h=ch, s=cs, v=cv, weights=cw)
        return grad


def lut_loss_gradient(
    input_hsv: np.ndarray,
    gt: np.ndarray,
    bank: LutBank,
    weights: LossWeights,
    mask: np.ndarray | None = None,
) -> BankGradient:
    """Analytic gradient of the direct-fit objective wrt every control
    point and fusion weight. Only the L1 and flare terms contribute."""
    return _FitProblem(input_hsv, gt, weights, mask).gradient(bank)


def fit_loss(
    input_hsv: np.ndarray,
    gt: np.ndarray,
    bank: LutBank,
    weights: LossWeights,
    mask: np.ndarray | None = None,
) -> float:
    """Direct-fit objective value (lambda_l1 * L1 + lambda_f * flare term)."""
    return _FitProblem(input_hsv, gt, weights, mask).loss(bank)


def _bank_with(bank: LutBank, h, s, v, w) -> LutBank:
    sets = [
        LutSet(Lut1D(h[i], CIRCULAR), Lut1D(s[i], LINEAR), Lut1D(v[i], LINEAR))
        for i in range(len(bank.sets))
    ]
    return LutBank(sets=sets, weights=np.asarray(w, dtype=float))


def finite_diff_gradient(
    input_hsv: np.ndarray,
    gt: np.ndarray,
    bank: LutBank,
    weights: LossWeights,
    mask: np.ndarray | None = None,
    step: float = 1e-4,
) -> BankGradient:
    """Central-difference gradient oracle with the same layout as
    ``lut_loss_gradient``. Weight partials perturb the raw weights
    without renormalization."""
    prob = _FitProblem(input_hsv, gt, weights, mask)
    n_l = len(bank.sets)
    s_lut = bank.sets[0].h.values.size
    h0 = np.stack([ls.h.values for ls in bank.sets]).astype(float)
    s0 = np.stack([ls.s.values for ls in bank.sets]).astype(float)
    v0 = np.stack([ls.v.values for ls in bank.sets]).astype(float)
    w0 = np.asarray(bank.weights, dtype=float)

    def central(arrays, key, i, j=None):
        h, s, v, w = (a.copy() for a in arrays)
        target = {"h": h, "s": s, "v": v, "w": w}[key]
        pos = (i,) if j is None else (i, j)
        orig = target[pos]
        target[pos] = orig + step
        up = prob.loss(_bank_with(bank, h, s, v, w))
        target[pos] = orig - step
        down = prob.loss(_bank_with(bank, h, s, v, w))
        return (up - down) / (2.0 * step)

    arrays = (h0, s0, v0, w0)
    gh = np.zeros((n_l, s_lut))
    gs = np.zeros((n_l, s_lut))
    gv = np.zeros((n_l, s_lut))
    gw = np.zeros(n_l)
    for i in range(n_l):
        for j in range(s_lut):
            gh[i, j] = central(arrays, "h", i, j)
            gs[i, j] = central(arrays, "s", i, j)
            gv[i, j] = central(arrays, "v", i, j)
        gw[i] = central(arrays, "w", i)
    return BankGradient(h=gh, s=gs, v=gv, weights=gw)


def _descend(bank: LutBank, grad: BankGradient, step: float):
    """One projected step: raw move, hue wrapped, weights clipped to the
    simplex and renormalized. Returns candidate arrays (unvalidated;
    non-finite steps surface as non-finite candidates for the caller)."""
    with np.errstate(invalid="ignore", over="ignore"):
        h = (np.stack([ls.h.values for ls in bank.sets]) - step * grad.h) % 1.0
        s = np.stack([ls.s.values for ls in bank.sets]) - step * grad.s
        v = np.stack([ls.v.values for ls in bank.sets]) - step * grad.v
        w = np.maximum(bank.weights - step * grad.weights, 0.0)
    tot = w.sum()
    if not np.isfinite(tot) or tot <= 0.0:
        w = np.full_like(w, 1.0 / w.size)
    else:
        w = w / tot
    return h, s, v, w


def fit_luts(sample: FlareSample, cfg: FitConfig | None = None) -> FitResult:
    """Fit a LUT bank to one sample by projected gradient descent.

    Starts from the identity bank with uniform weights, so the result is
    never worse than doing nothing. Raises if the loss goes non-finite
    or if the config re-enables the perceptual/VQ terms, which the
    analytic gradient deliberately does not cover.
    """
    if cfg is None:
        cfg = FitConfig()
    if cfg.weights.lambda_p != 0.0 or cfg.weights.lambda_q != 0.0:
        raise ValueError(
            "direct fitting covers only the pixel and flare terms; "
            "set lambda_p and lambda_q to 0"
        )
    input_hsv = rgb_to_hsv(np.asarray(sample.input, dtype=float))
    prob = _FitProblem(input_hsv, sample.gt, cfg.weights, kink_eps=cfg.kink_eps)
    bank = identity_bank(cfg.n_l, cfg.s_lut)

    loss = prob.loss(bank)
    if not np.isfinite(loss):
        raise RuntimeError("divergent loss (non-finite) at iteration 0")
    trace = [loss]
    steps: list[float] = []

    base_step = cfg.step
    for it in range(1, cfg.max_iters + 1):
        grad, cost = prob.gradient(bank, with_costs=True)
        # move only parameters whose gain rate beats their kink-cost rate;
        # along that direction the first-order loss change is negative
        direction = BankGradient(
            h=np.where(np.abs(grad.h) > cost.h, grad.h, 0.0),
            s=np.where(np.abs(grad.s) > cost.s, grad.s, 0.0),
            v=np.where(np.abs(grad.v) > cost.v, grad.v, 0.0),
            weights=np.where(np.abs(grad.weights) > cost.weights, grad.weights, 0.0),
        )
        step = base_step
        accepted = None
        for _ in range(21):
            h, s, v, w = _descend(bank, direction, step)
            if not (
                np.isfinite(h).all()
                and np.isfinite(s).all()
                and np.isfinite(v).all()
                and np.isfinite(w).all()
            ):
                raise RuntimeError(f"divergent loss (non-finite) at iteration {it}")
            cand = _bank_with(bank, h, s, v, w)
            cand_loss = prob.loss(cand)
            if np.isnan(cand_loss):
                raise RuntimeError(f"divergent loss (NaN) at iteration {it}")
            if cand_loss < loss:
                accepted = (cand, cand_loss, step)
                break
            step *= 0.5
        if accepted is None:
            break
        bank, new_loss, used = accepted
        # restart the next search at twice the accepted step so the step
        # scale adapts in both directions
        base_step = 2.0 * used
        steps.append(used)
        trace.append(new_loss)
        rel_drop = (loss - new_loss) / max(abs(loss), 1e-12)
        loss = new_loss
        if rel_drop < cfg.tol:
            break

    out = prob.output(bank)
    metrics = compute_report(out, sample.gt, sample.mask, sample.input)
    return FitResult(bank=bank, loss_trace=trace, step_trace=steps, metrics=metrics)
