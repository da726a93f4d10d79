"""Fixed color palette and binary-PPM rendering for heatmap output.

The palette is a viridis-like perceptually ordered ramp, pinned here as 11
RGB anchors and linearly interpolated to 256 entries so that rendered maps
are bit-identical across platforms and library versions.  Failed grid
cells are painted magenta, which no palette entry can produce.
"""

from __future__ import annotations

import numpy as np

__all__ = ["PALETTE_ANCHORS", "palette_256", "render_ppm", "FAILED_RGB"]

#: 11 anchor colors at equally spaced positions 0.0, 0.1, …, 1.0.
PALETTE_ANCHORS = (
    (68, 1, 84),
    (72, 36, 117),
    (65, 68, 135),
    (53, 95, 141),
    (42, 120, 142),
    (33, 144, 141),
    (34, 168, 132),
    (68, 190, 112),
    (122, 209, 81),
    (189, 223, 38),
    (253, 231, 37),
)

#: Marker color for cells whose evaluation failed.
FAILED_RGB = (255, 0, 255)


def palette_256() -> np.ndarray:
    """The 256×3 uint8 lookup table interpolated from the anchors."""
    anchors = np.asarray(PALETTE_ANCHORS, dtype=float)
    pos = np.linspace(0.0, 1.0, len(anchors))
    x = np.linspace(0.0, 1.0, 256)
    table = np.empty((256, 3), dtype=np.uint8)
    for c in range(3):
        table[:, c] = np.rint(np.interp(x, pos, anchors[:, c])).astype(np.uint8)
    return table


def render_ppm(values, *, failed=None, vmax=None) -> bytes:
    """Render a 2-D value array to a binary PPM (P6) image.

    ``values`` is indexed ``[t_index, L_index]`` with both axes ascending;
    the image is written with the largest t at the top row and L increasing
    left to right.  Values map linearly onto the palette over [0, vmax]
    (vmax defaults to the largest finite value; an all-zero map renders as
    the lowest palette entry).  Cells flagged in ``failed`` — or holding
    non-finite values — render magenta.
    """
    vals = np.asarray(values, dtype=float)
    if vals.ndim != 2:
        raise ValueError(f"expected a 2-D value array, got shape {vals.shape}")
    bad = ~np.isfinite(vals)
    if failed is not None:
        bad |= np.asarray(failed, dtype=bool)
    if vmax is None:
        finite = vals[~bad]
        vmax = float(finite.max()) if finite.size else 0.0
    if vmax <= 0.0:
        vmax = 1.0
    scaled = np.clip(np.where(bad, 0.0, vals) / vmax, 0.0, 1.0)
    idx = np.rint(scaled * 255).astype(int)
    rgb = palette_256()[idx]
    rgb[bad] = FAILED_RGB
    rgb = rgb[::-1, :, :]  # top row = largest t
    h, w = rgb.shape[:2]
    header = f"P6\n{w} {h}\n255\n".encode("ascii")
    return header + rgb.astype(np.uint8).tobytes()
