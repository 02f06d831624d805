"""Procedural face-like images used as the desk-scale "real" photographs.

Each image is drawn from a small set of interpretable attributes in [0, 1]
(pose, skin tone, hair colour, eye size, ...). Real images carry sensor
noise; the clean renderings double as regression targets when training the
desk generator.
"""

from __future__ import annotations

import numpy as np

ATTRIBUTES = (
    "pose",
    "skin_tone",
    "hair_brightness",
    "hair_redness",
    "hair_length",
    "eye_size",
    "smile",
    "lip_redness",
    "face_width",
    "background_brightness",
    "background_hue",
)
N_ATTRIBUTES = len(ATTRIBUTES)
IMAGE_SIZE = 32
SENSOR_NOISE = 0.03


def sample_attributes(n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(0.0, 1.0, size=(n, N_ATTRIBUTES))


def _soft_ellipse(xx, yy, cx, cy, rx, ry, edge=0.6):
    # cx.. are [N,1,1]; returns coverage in [0,1] with a ~1px soft edge
    d = np.sqrt(((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2)
    return 1.0 / (1.0 + np.exp(-(1.0 - d) * np.minimum(rx, ry) / edge))


def _mix(base, color, mask):
    return base * (1.0 - mask[:, None]) + color[:, :, None, None] * mask[:, None]


def render_faces(attrs: np.ndarray, size: int = IMAGE_SIZE) -> np.ndarray:
    """Render noiseless faces, returning float32 ``[N, 3, size, size]`` in [0, 1]."""
    a = np.clip(np.asarray(attrs, dtype=np.float64), 0.0, 1.0)
    n = a.shape[0]
    s = size / 32.0
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) + 0.5
    xx, yy = xx[None], yy[None]

    def col(i):
        return a[:, i][:, None, None]

    pose, skin, hb, hr, hl, eye, smile, lip, fw, bgb, bgh = (col(i) for i in range(N_ATTRIBUTES))
    cx = (16.0 + (pose - 0.5) * 8.0) * s
    cy = 17.0 * s

    bg = np.stack(
        [0.25 + 0.5 * bgb[:, 0, 0] * (1 - 0.5 * bgh[:, 0, 0]),
         0.3 + 0.45 * bgb[:, 0, 0],
         0.3 + 0.5 * bgb[:, 0, 0] * (0.5 + 0.5 * bgh[:, 0, 0])],
        axis=1,
    )
    img = np.broadcast_to(bg[:, :, None, None], (n, 3, size, size)).copy()

    hair_rgb = np.stack(
        [0.1 + 0.8 * hb[:, 0, 0] * (0.6 + 0.4 * hr[:, 0, 0]),
         0.08 + 0.75 * hb[:, 0, 0] * (1.0 - 0.6 * hr[:, 0, 0]),
         0.06 + 0.7 * hb[:, 0, 0] * (1.0 - 0.8 * hr[:, 0, 0])],
        axis=1,
    )
    rx = (7.0 + 3.0 * fw) * s
    hair = _soft_ellipse(xx, yy, cx, cy - (2.0 + 2.0 * hl) * s, rx + 2.5 * s, (10.0 + 4.0 * hl) * s)
    img = _mix(img, hair_rgb, hair)

    skin_rgb = np.stack(
        [0.35 + 0.6 * skin[:, 0, 0], 0.22 + 0.58 * skin[:, 0, 0], 0.15 + 0.55 * skin[:, 0, 0]],
        axis=1,
    )
    face = _soft_ellipse(xx, yy, cx, cy + 1.5 * s, rx, 10.0 * s)
    img = _mix(img, skin_rgb, face)

    eye_r = (1.0 + 1.6 * eye) * s
    eye_rgb = np.tile(np.array([[0.08, 0.08, 0.12]]), (n, 1))
    offset = (3.5 + 0.3 * fw) * s
    for side in (-1.0, 1.0):
        e = _soft_ellipse(xx, yy, cx + side * offset + (pose - 0.5) * 1.5 * s, cy - 0.5 * s, eye_r, eye_r)
        img = _mix(img, eye_rgb, e)

    mouth_rgb = np.stack(
        [0.35 + 0.6 * lip[:, 0, 0], 0.15 + 0.1 * (1 - lip[:, 0, 0]), 0.15 + 0.1 * (1 - lip[:, 0, 0])],
        axis=1,
    )
    mouth = _soft_ellipse(
        xx, yy, cx + (pose - 0.5) * 2.0 * s, cy + 6.0 * s, (1.5 + 3.0 * smile) * s, (0.8 + 0.6 * smile) * s
    )
    img = _mix(img, mouth_rgb, mouth)
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def real_faces(n: int, seed: int, size: int = IMAGE_SIZE) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``n`` noisy "photographs" and their attribute vectors."""
    rng = np.random.default_rng(seed)
    attrs = sample_attributes(n, rng)
    img = render_faces(attrs, size)
    img = img + rng.normal(0.0, SENSOR_NOISE, size=img.shape).astype(np.float32)
    return np.clip(img, 0.0, 1.0), attrs
