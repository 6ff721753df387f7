"""Bilinear resampling shared by decomposition, recomposition and warping."""

from __future__ import annotations

import numpy as np


def bilinear_taps(
    u, v, width: int, height: int, wrap_u: bool = False
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Neighbor indices and weights for sampling at edge-origin coordinates.

    ``(0.5, 0.5)`` is the first pixel center.  Rows clamp at the top/bottom;
    columns wrap with period ``width`` when ``wrap_u`` and clamp otherwise.

    Returns:
        (x0, x1, y0, y1, fx, fy) arrays shaped like the inputs.
    """
    x = np.asarray(u, dtype=float) - 0.5
    y = np.asarray(v, dtype=float) - 0.5
    x0f = np.floor(x)
    y0f = np.floor(y)
    fx = x - x0f
    fy = y - y0f
    y0 = np.clip(y0f.astype(np.int64), 0, height - 1)
    y1 = np.clip(y0f.astype(np.int64) + 1, 0, height - 1)
    if wrap_u:
        x0 = x0f.astype(np.int64) % width
        x1 = (x0f.astype(np.int64) + 1) % width
    else:
        x0 = np.clip(x0f.astype(np.int64), 0, width - 1)
        x1 = np.clip(x0f.astype(np.int64) + 1, 0, width - 1)
    return x0, x1, y0, y1, fx, fy


def bilinear_sample(image: np.ndarray, u, v, wrap_u: bool = False) -> np.ndarray:
    """Sample an (H, W, C) image at continuous coordinates.

    Accepts arbitrary batch shapes for ``u``/``v`` and returns ``(..., C)``
    in the image's floating dtype.
    """
    height, width = image.shape[:2]
    x0, x1, y0, y1, fx, fy = bilinear_taps(u, v, width, height, wrap_u)
    dtype = image.dtype if np.issubdtype(image.dtype, np.floating) else np.float64
    fx = fx.astype(dtype)[..., None]
    fy = fy.astype(dtype)[..., None]
    # Incremental form: constant images pass through bit-exactly.
    v00 = image[y0, x0]
    v10 = image[y1, x0]
    top = v00 + fx * (image[y0, x1] - v00)
    bottom = v10 + fx * (image[y1, x1] - v10)
    return top + fy * (bottom - top)
