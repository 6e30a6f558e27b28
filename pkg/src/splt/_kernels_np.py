"""NumPy/FFT implementations of the hot kernels.

This is the fallback backend when the compiled extension is absent, and it
is also the preferred algorithm for large templates regardless of backend:
the FFT numerator is O(S log S) versus O(S * T) for the direct kernel.
"""

import numpy as np
import scipy.fft

# Windows with sum-of-squared-deviations below this are flat: correlation 0.
# Must match VAR_EPS in _kernels.pyx.
VAR_EPS = 1e-9


def _integral(a):
    """Summed-area table with a zero border row/column."""
    out = np.zeros((a.shape[0] + 1, a.shape[1] + 1), dtype=np.float64)
    np.cumsum(a, axis=0, out=out[1:, 1:])
    np.cumsum(out[1:, 1:], axis=1, out=out[1:, 1:])
    return out


def _window_sums(integral, th, tw):
    return (integral[th:, tw:] - integral[:-th or None, tw:]
            - integral[th:, :-tw or None] + integral[:-th or None, :-tw or None])


def ncc_fft(region, template):
    """ZNCC response grid via one FFT correlation per template."""
    return ncc_fft_batch(region, [template])[0]


def ncc_fft_batch(region, templates):
    """ZNCC response grids for several templates against one region.

    The region transform and its summed-area tables are computed once and
    shared; templates are zero-padded to a common FFT shape so their
    transforms run as one batched call.
    """
    rh, rw = region.shape
    for t in templates:
        if t.shape[0] > rh or t.shape[1] > rw:
            raise ValueError("template larger than region")
    fh = scipy.fft.next_fast_len(rh)
    fw = scipy.fft.next_fast_len(rw)

    spec_r = scipy.fft.rfft2(region, s=(fh, fw))
    int1 = _integral(region)
    int2 = _integral(region * region)

    centred = np.zeros((len(templates), fh, fw), dtype=np.float64)
    t_ssd = np.empty(len(templates))
    t_n = np.empty(len(templates))
    for k, t in enumerate(templates):
        c = t - t.mean()
        centred[k, : t.shape[0], : t.shape[1]] = c
        t_ssd[k] = np.sum(c * c)
        t_n[k] = t.size
    spec_t = scipy.fft.rfft2(centred, s=(fh, fw), axes=(-2, -1))
    # Circular correlation; valid placements never wrap because the
    # templates fit inside the region.
    corr = scipy.fft.irfft2(spec_r[None] * np.conj(spec_t),
                            s=(fh, fw), axes=(-2, -1))

    out = []
    for k, t in enumerate(templates):
        th, tw = t.shape
        num = corr[k, : rh - th + 1, : rw - tw + 1]
        s1 = _window_sums(int1, th, tw)
        s2 = _window_sums(int2, th, tw)
        ssd_r = np.maximum(s2 - s1 * s1 / t_n[k], 0.0)
        if t_ssd[k] <= VAR_EPS:
            out.append(np.zeros_like(num))
            continue
        denom = np.sqrt(ssd_r * t_ssd[k])
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = num / denom
        vals[ssd_r <= VAR_EPS] = 0.0
        np.clip(vals, -1.0, 1.0, out=vals)
        out.append(vals)
    return out


def bilinear_resize(src, x0, y0, bw, bh, out_h, out_w):
    """Resample the rect [x0, x0+bw) x [y0, y0+bh) of `src` to out_h x out_w.

    Operation-for-operation twin of the compiled kernel (results are
    bit-identical).
    """
    sh, sw = src.shape
    if sh < 2 or sw < 2:
        raise ValueError("source must be at least 2x2")
    step_x = bw / out_w
    step_y = bh / out_h
    fx = x0 + (np.arange(out_w, dtype=np.float64) + 0.5) * step_x - 0.5
    fy = y0 + (np.arange(out_h, dtype=np.float64) + 0.5) * step_y - 0.5
    np.clip(fx, 0.0, sw - 1.0, out=fx)
    np.clip(fy, 0.0, sh - 1.0, out=fy)
    ix = np.minimum(fx.astype(np.int64), sw - 2)
    iy = np.minimum(fy.astype(np.int64), sh - 2)
    tx = fx - ix
    ty = (fy - iy)[:, None]

    a = src[iy[:, None], ix[None, :]]
    b = src[iy[:, None], ix[None, :] + 1]
    c = src[iy[:, None] + 1, ix[None, :]]
    d = src[iy[:, None] + 1, ix[None, :] + 1]
    top = a + tx * (b - a)
    bot = c + tx * (d - c)
    return top + ty * (bot - top)
