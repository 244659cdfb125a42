"""Dependency-free PGM/PPM image reading and writing.

Heatmaps are emitted as raw 8-bit PGM (P5, maxval 255); overlays as raw
PPM (P6) blending the input image and a colored heatmap 50/50.
"""

from __future__ import annotations

import numpy as np

from .tensor import ValidationError


def _read_header(data, path, magic_expected):
    tokens = []
    pos = 0
    while len(tokens) < 4:
        if pos >= len(data):
            raise ValidationError(f"{path}: truncated netpbm header")
        ch = data[pos:pos + 1]
        if ch == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            start = pos
            while pos < len(data) and not data[pos:pos + 1].isspace():
                pos += 1
            tokens.append(data[start:pos])
    magic, w, h, maxval = tokens
    magic = magic.decode("ascii")
    if magic not in magic_expected:
        raise ValidationError(
            f"{path}: expected {'/'.join(magic_expected)} file, got "
            f"{magic!r}"
        )
    return magic, int(w), int(h), int(maxval), pos + 1


def read_pgm(path: str) -> np.ndarray:
    """Grayscale image as floats in [0, 1], shape (h, w)."""
    with open(path, "rb") as fh:
        data = fh.read()
    magic, w, h, maxval, pos = _read_header(data, path, ("P2", "P5"))
    n = w * h
    if magic == "P5":
        if len(data) - pos < n:
            raise ValidationError(f"{path}: expected {n} pixels")
        raw = np.frombuffer(data, dtype=np.uint8, count=n, offset=pos)
    else:
        raw = np.array(data[pos:].split()[:n], dtype=np.float64)
        if raw.size != n:
            raise ValidationError(f"{path}: expected {n} pixels")
    return raw.reshape(h, w).astype(np.float64) / maxval


def read_ppm(path: str) -> np.ndarray:
    """RGB image as floats in [0, 1], shape (h, w, 3)."""
    with open(path, "rb") as fh:
        data = fh.read()
    magic, w, h, maxval, pos = _read_header(data, path, ("P3", "P6"))
    n = w * h * 3
    if magic == "P6":
        raw = np.frombuffer(data, dtype=np.uint8, count=n, offset=pos)
    else:
        raw = np.array(data[pos:].split()[:n], dtype=np.float64)
        if raw.size != n:
            raise ValidationError(f"{path}: expected {n} samples")
    return raw.reshape(h, w, 3).astype(np.float64) / maxval


def _to_bytes(values01):
    clipped = np.clip(np.asarray(values01, dtype=np.float64), 0.0, 1.0)
    return np.round(clipped * 255.0).astype(np.uint8)


def write_pgm(path: str, grid01) -> None:
    grid = _to_bytes(grid01)
    if grid.ndim != 2:
        raise ValidationError(f"PGM needs a 2-D grid, got {grid.shape}")
    h, w = grid.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(grid.tobytes())


def write_ppm(path: str, rgb01) -> None:
    rgb = _to_bytes(rgb01)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValidationError(f"PPM needs an (h, w, 3) array, got {rgb.shape}")
    h, w, _ = rgb.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(rgb.tobytes())


def heat_color(heat01) -> np.ndarray:
    """Blue-to-red ramp for heatmap values in [0, 1]."""
    h = np.clip(np.asarray(heat01, dtype=np.float64), 0.0, 1.0)
    return np.stack([h, 0.2 * h, 1.0 - h], axis=-1)


def overlay(image, heat01) -> np.ndarray:
    """50/50 alpha blend of an image (grayscale (h, w) or RGB) with the
    colored heatmap; both already in [0, 1] with matching spatial dims."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        img = np.stack([img] * 3, axis=-1)
    heat = heat_color(heat01)
    if img.shape != heat.shape:
        raise ValidationError(
            f"image {img.shape} and heatmap {heat.shape} dims differ"
        )
    return 0.5 * img + 0.5 * heat
