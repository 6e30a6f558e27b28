"""Backend selection for the hot kernels.

The compiled extension is used when it imported cleanly and the environment
variable SPLT_PURE_PYTHON is not set. Correlation additionally dispatches on
problem size: the direct spatial kernel wins for small templates, the FFT
path for large ones (see benchmarks/bench_kernels.py for the crossover).
"""

import os

import numpy as np

from . import _kernels_np

try:
    from . import _kernels as _ext
except ImportError:
    _ext = None

HAVE_EXT = _ext is not None
USE_EXT = HAVE_EXT and os.environ.get("SPLT_PURE_PYTHON", "") not in ("1", "true", "yes")
BACKEND = "cython" if USE_EXT else "numpy"

# Placements * template pixels below which the direct kernel beats the FFT
# path. Measured with benchmarks/bench_kernels.py: the two paths tie near
# 5e5 MACs and the FFT pulls ahead decisively past ~2e6. The constant only
# affects speed, never results.
DIRECT_MAC_LIMIT = 600_000


def _as_c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def _direct_cost(region_shape, template_shape):
    oh = region_shape[0] - template_shape[0] + 1
    ow = region_shape[1] - template_shape[1] + 1
    return oh * ow * template_shape[0] * template_shape[1]


def ncc_map(region, template):
    """Zero-normalized cross-correlation of `template` over `region`.

    Returns one value per valid placement, shape
    (rh - th + 1, rw - tw + 1), all values in [-1, 1]. Flat windows and
    flat templates yield 0.
    """
    region = _as_c(region)
    template = _as_c(template)
    if template.shape[0] > region.shape[0] or template.shape[1] > region.shape[1]:
        raise ValueError("template larger than region")
    if USE_EXT and _direct_cost(region.shape, template.shape) <= DIRECT_MAC_LIMIT:
        return _ext.ncc_direct(region, template)
    return _kernels_np.ncc_fft(region, template)


def ncc_map_multi(region, templates):
    """ncc_map for several templates against one region, batching the FFT
    work where the FFT path is selected."""
    region = _as_c(region)
    templates = [_as_c(t) for t in templates]
    out = [None] * len(templates)
    fft_idx = []
    for k, t in enumerate(templates):
        if t.shape[0] > region.shape[0] or t.shape[1] > region.shape[1]:
            raise ValueError("template larger than region")
        if USE_EXT and _direct_cost(region.shape, t.shape) <= DIRECT_MAC_LIMIT:
            out[k] = _ext.ncc_direct(region, t)
        else:
            fft_idx.append(k)
    if fft_idx:
        maps = _kernels_np.ncc_fft_batch(region, [templates[k] for k in fft_idx])
        for k, m in zip(fft_idx, maps):
            out[k] = m
    return out


def bilinear_resize(src, x0, y0, bw, bh, out_h, out_w):
    """Fused crop + bilinear resample; see the backend modules for the
    sampling convention. Both backends return bit-identical results."""
    src = _as_c(src)
    if USE_EXT:
        return _ext.bilinear_resize(src, float(x0), float(y0),
                                    float(bw), float(bh), int(out_h), int(out_w))
    return _kernels_np.bilinear_resize(src, float(x0), float(y0),
                                       float(bw), float(bh), int(out_h), int(out_w))
