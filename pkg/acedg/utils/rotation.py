"""Image rotation about the centre with bilinear interpolation and zero padding."""

import numpy as np
from scipy import ndimage


def rotate(image: np.ndarray, angle: float) -> np.ndarray:
    """Rotate a 2-D image counter-clockwise by ``angle`` degrees.

    Multiples of 90 degrees are exact pixel permutations (square images).
    Other angles sample the source bilinearly; pixels mapped from outside
    the frame are 0. Output values stay within the input's [min(0, .), max]
    range, so [0, 1] images stay in [0, 1].

    Args:
        image: 2-D array (rows, cols)
        angle: Rotation in degrees, finite

    Returns:
        Rotated float64 image of the same shape

    Raises:
        ValueError: If the image is not 2-D or the angle is not finite
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"rotate needs a 2-D image, got shape {img.shape}")
    if not np.isfinite(angle):
        raise ValueError("Rotation angle must be finite")

    rows, cols = img.shape
    if angle % 90 == 0 and rows == cols:
        return np.rot90(img, k=int(angle // 90) % 4).copy()

    theta = np.deg2rad(angle)
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    cy, cx = (rows - 1) / 2.0, (cols - 1) / 2.0
    r, c = np.meshgrid(np.arange(rows, dtype=np.float64), np.arange(cols, dtype=np.float64), indexing="ij")
    # output pixel -> source pixel: rotate by -angle in (x right, y up) coordinates
    x, y = c - cx, cy - r
    src_x = x * cos_t + y * sin_t
    src_y = -x * sin_t + y * cos_t
    coords = np.stack([cy - src_y, cx + src_x])

    out = ndimage.map_coordinates(img, coords, order=1, mode="constant", cval=0.0, prefilter=False)
    return np.clip(out, min(0.0, float(img.min())), float(img.max()))
