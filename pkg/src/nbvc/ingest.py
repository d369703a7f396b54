"""Dataset ingestion and emission: PNG directories and 8-bit planar YUV420.

YUV uses the BT.601 full-range matrix:
    R = Y + 1.402 (V - 128)
    G = Y - 0.344136 (U - 128) - 0.714136 (V - 128)
    B = Y + 1.772 (U - 128)
with nearest-neighbour chroma upsampling.
"""

from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .core_types import Frame
from .errors import IngestionError

PNG_PATTERN = "frame_{:05d}.png"


def load_png_dir(path, max_frames=None):
    path = Path(path)
    files = sorted(p for p in path.iterdir()
                   if p.suffix.lower() in (".png", ".jpg", ".jpeg", ".bmp"))
    if not files:
        raise IngestionError(f"no image files in {path}")
    if max_frames is not None:
        files = files[:max_frames]
    frames = []
    size = None
    for i, f in enumerate(files):
        arr = np.asarray(Image.open(f).convert("RGB"), dtype=np.float32) / 255.0
        px = torch.from_numpy(arr).permute(2, 0, 1).contiguous()
        if size is None:
            size = px.shape
        elif px.shape != size:
            raise IngestionError(f"frame size changed at {f}")
        frames.append(Frame(px, frame_index=i, original_size=(px.shape[1], px.shape[2])))
    return frames


def yuv420_to_rgb(y, u, v):
    """Full-range BT.601; inputs are uint8 planes, chroma at half resolution."""
    yf = y.astype(np.float32)
    uf = np.repeat(np.repeat(u.astype(np.float32), 2, axis=0), 2, axis=1)[:y.shape[0], :y.shape[1]]
    vf = np.repeat(np.repeat(v.astype(np.float32), 2, axis=0), 2, axis=1)[:y.shape[0], :y.shape[1]]
    du, dv = uf - 128.0, vf - 128.0
    r = yf + 1.402 * dv
    g = yf - 0.344136 * du - 0.714136 * dv
    b = yf + 1.772 * du
    return np.clip(np.stack([r, g, b]), 0.0, 255.0)


def load_yuv420(path, width, height, max_frames=None):
    if width is None or height is None:
        raise IngestionError("yuv ingestion requires --width and --height")
    if width % 2 or height % 2:
        raise IngestionError("yuv420 needs even dimensions")
    frame_bytes = width * height * 3 // 2
    frames = []
    with open(path, "rb") as fh:
        index = 0
        while max_frames is None or index < max_frames:
            raw = fh.read(frame_bytes)
            if len(raw) < frame_bytes:
                if max_frames is not None:
                    raise IngestionError(
                        f"requested {max_frames} frames, file holds {index}")
                break
            buf = np.frombuffer(raw, dtype=np.uint8)
            y = buf[:width * height].reshape(height, width)
            u = buf[width * height:width * height * 5 // 4].reshape(height // 2, width // 2)
            v = buf[width * height * 5 // 4:].reshape(height // 2, width // 2)
            rgb = yuv420_to_rgb(y, u, v) / 255.0
            px = torch.from_numpy(rgb.astype(np.float32))
            frames.append(Frame(px, frame_index=index,
                                original_size=(height, width)))
            index += 1
    if not frames:
        raise IngestionError(f"no frames read from {path}")
    return frames


def ingest_sequence(path, fmt, width=None, height=None, max_frames=None):
    if fmt == "png-dir":
        return load_png_dir(path, max_frames)
    if fmt == "yuv420-8bit":
        return load_yuv420(path, width, height, max_frames)
    raise IngestionError(f"unknown format {fmt!r}")


def save_png_dir(frames, path):
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    for frame in frames:
        arr = (frame.pixels.clamp(0, 1) * 255.0).round().byte()
        img = Image.fromarray(arr.permute(1, 2, 0).cpu().numpy(), "RGB")
        img.save(path / PNG_PATTERN.format(frame.frame_index))
    return path
