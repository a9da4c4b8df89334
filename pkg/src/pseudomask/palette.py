"""Indexed-color palette for label PNGs.

The palette is generated by the standard bit-interleaving procedure used
by the VOC benchmark tooling: bit ``j`` of each of the three lowest
label-bit groups is distributed into the high bits of R, G and B.  The
generator covers all 256 entries, so label sets larger than 21 classes
(e.g. COCO's 91) get distinct colors from the same table.
"""

import numpy as np

__all__ = ["color_map", "LABEL_PALETTE", "IGNORE_LABEL"]

IGNORE_LABEL = 255


def color_map(n: int = 256) -> np.ndarray:
    """Return the n×3 uint8 lookup table mapping label index to RGB."""
    cmap = np.zeros((n, 3), dtype=np.uint8)
    for i in range(n):
        r = g = b = 0
        c = i
        for j in range(8):
            r |= ((c >> 0) & 1) << (7 - j)
            g |= ((c >> 1) & 1) << (7 - j)
            b |= ((c >> 2) & 1) << (7 - j)
            c >>= 3
        cmap[i] = (r, g, b)
    return cmap


LABEL_PALETTE = color_map(256)
