"""Training data: directories of frame-sequence folders, or in-memory clips."""

from pathlib import Path

import numpy as np
import torch
from PIL import Image

from ..errors import IngestionError

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")


def _load_image(path) -> torch.Tensor:
    img = Image.open(path).convert("RGB")
    arr = np.asarray(img, dtype=np.float32) / 255.0
    return torch.from_numpy(arr).permute(2, 0, 1).contiguous()


class ClipDataset:
    """A fixed in-memory clip; every sample is a contiguous window of it."""

    def __init__(self, frames: torch.Tensor):
        if frames.dim() != 4 or frames.shape[1] != 3:
            raise IngestionError("clip must be (N, 3, H, W)")
        self.frames = frames

    def sample(self, rng: np.random.Generator, length: int, crop_size=None) -> torch.Tensor:
        n = self.frames.shape[0]
        if length > n:
            raise IngestionError(f"clip has {n} frames, need {length}")
        start = int(rng.integers(0, n - length + 1))
        window = self.frames[start:start + length]
        return _crop(window, crop_size, rng)


class SequenceFolderDataset:
    """Root directory of sequence folders, each holding 8-bit RGB frames in
    lexicographic order."""

    def __init__(self, root):
        self.root = Path(root)
        self.sequences = sorted(
            p for p in self.root.iterdir()
            if p.is_dir() and any(c.suffix.lower() in IMAGE_SUFFIXES for c in p.iterdir())
        )
        if not self.sequences:
            raise IngestionError(f"no sequence folders under {self.root}")

    def sample(self, rng: np.random.Generator, length: int, crop_size=None) -> torch.Tensor:
        seq_dir = self.sequences[int(rng.integers(0, len(self.sequences)))]
        files = sorted(p for p in seq_dir.iterdir()
                       if p.suffix.lower() in IMAGE_SUFFIXES)
        if len(files) < length:
            raise IngestionError(f"{seq_dir} has {len(files)} frames, need {length}")
        start = int(rng.integers(0, len(files) - length + 1))
        window = torch.stack([_load_image(p) for p in files[start:start + length]])
        return _crop(window, crop_size, rng)


def _crop(window: torch.Tensor, crop_size, rng):
    if crop_size is None:
        return window
    ch, cw = crop_size
    _, _, h, w = window.shape
    if h < ch or w < cw:
        raise IngestionError(f"frames {h}x{w} smaller than crop {ch}x{cw}")
    y = int(rng.integers(0, h - ch + 1))
    x = int(rng.integers(0, w - cw + 1))
    return window[:, :, y:y + ch, x:x + cw].contiguous()
