"""PNG / PNM image files <-> unit-range float images."""

import os

import cv2
import numpy as np

from pnplight.imagecore import as_image

IMAGE_EXTENSIONS = (".png", ".ppm", ".pgm", ".pnm")


def is_image_file(path):
    return os.path.splitext(str(path))[1].lower() in IMAGE_EXTENSIONS


def list_images(directory):
    """Image files in ``directory`` sorted by name."""
    return sorted(
        name for name in os.listdir(directory) if is_image_file(name) and os.path.isfile(os.path.join(directory, name))
    )


def read_image(path):
    """Load an 8- or 16-bit PNG/PNM file as a float64 (H, W, C) array in [0, 1]."""
    path = str(path)
    if not is_image_file(path):
        raise OSError(f"{path}: unsupported image format")
    raw = cv2.imread(path, cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise OSError(f"{path}: cannot read image")
    if raw.dtype == np.uint8:
        scale = 255.0
    elif raw.dtype == np.uint16:
        scale = 65535.0
    else:
        raise OSError(f"{path}: unsupported sample type {raw.dtype}")
    if raw.ndim == 2:
        raw = raw[:, :, None]
    elif raw.shape[2] == 3:
        raw = raw[:, :, ::-1]
    elif raw.shape[2] == 4:
        raw = raw[:, :, 2::-1]
    else:
        raise OSError(f"{path}: unsupported channel count {raw.shape[2]}")
    return raw.astype(np.float64) / scale


def to_uint8(img):
    img = as_image(img)
    return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_image(path, img):
    """Save as 8-bit; the format follows the file extension."""
    path = str(path)
    if not is_image_file(path):
        raise OSError(f"{path}: unsupported image format")
    data = to_uint8(img)
    if data.shape[2] == 3:
        data = np.ascontiguousarray(data[:, :, ::-1])
    else:
        data = data[:, :, 0]
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    if not cv2.imwrite(path, data):
        raise OSError(f"{path}: cannot write image")
