"""ASCII portable graymap (P2) output"""
from typing import Iterable, Optional

import numpy as np

MAXVAL = 255
ROW_WIDTH = 16


def render_p2(image: np.ndarray, comments: Iterable[str] = (), scale: Optional[float] = None) -> str:
    """image[ix, iy] with (0, 0) the lower-left cell; larger value is brighter.

    scale maps to white; default is the image maximum. An all-zero image is black.
    """
    image = np.asarray(image, dtype=float)
    top = scale if scale is not None else float(image.max(initial=0.0))
    if top > 0:
        gray = np.clip(np.rint(image / top * MAXVAL), 0, MAXVAL).astype(int)
    else:
        gray = np.zeros(image.shape, dtype=int)
    # file rows run top to bottom, columns left to right
    rows = gray.T[::-1]
    width, height = image.shape
    lines = ["P2"]
    lines += [f"# {c}" for c in comments]
    lines.append(f"{width} {height}")
    lines.append(str(MAXVAL))
    for row in rows:
        for start in range(0, width, ROW_WIDTH):
            lines.append(" ".join(str(v) for v in row[start:start + ROW_WIDTH]))
    return "\n".join(lines) + "\n"


def parse_p2(text: str) -> np.ndarray:
    """Inverse of render_p2 up to gray quantisation; returns image[ix, iy]"""
    tokens = []
    for line in text.splitlines():
        line = line.split("#", 1)[0]
        tokens.extend(line.split())
    if not tokens or tokens[0] != "P2":
        raise ValueError("not an ASCII graymap")
    width, height, _maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    values = np.array([int(t) for t in tokens[4:4 + width * height]]).reshape(height, width)
    return values[::-1].T
