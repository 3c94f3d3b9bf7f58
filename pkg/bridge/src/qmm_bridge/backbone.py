"""Tiny hierarchical vision transformer backbone producing 768-dim pooled
embeddings of 224x224 images.

Weight resolution order:

1. ``QMM_BRIDGE_WEIGHTS`` -- path to a torchvision swin_t state dict
   (e.g. ImageNet-pretrained weights dropped in by the operator).
2. A cached weight file under ``QMM_BRIDGE_CACHE`` (default
   ``~/.cache/qmm-bridge``).
3. Fresh seeded initialization, persisted to the cache so every later
   process serves bit-identical features.

Inference runs in eval mode on a single thread, so repeated requests for
the same image are deterministic.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np
import torch
from PIL import Image
from torchvision.models import swin_t

FEATURE_DIM = 768
INPUT_SIDE = 224
INIT_SEED = 20240
_IMAGENET_MEAN = torch.tensor([0.485, 0.456, 0.406]).view(3, 1, 1)
_IMAGENET_STD = torch.tensor([0.229, 0.224, 0.225]).view(3, 1, 1)


def _cache_dir() -> Path:
    env = os.environ.get("QMM_BRIDGE_CACHE")
    if env:
        return Path(env)
    return Path.home() / ".cache" / "qmm-bridge"


class Backbone:
    """Loaded transformer with the classification head removed."""

    def __init__(self) -> None:
        torch.set_num_threads(1)
        torch.manual_seed(INIT_SEED)
        model = swin_t(weights=None)
        self.pretrained = False

        weights_path = os.environ.get("QMM_BRIDGE_WEIGHTS")
        if weights_path:
            state = torch.load(weights_path, map_location="cpu",
                               weights_only=True)
            model.load_state_dict(state)
            self.pretrained = True
        else:
            cached = _cache_dir() / f"swin_t_seed{INIT_SEED}.pt"
            if cached.exists():
                state = torch.load(cached, map_location="cpu",
                                   weights_only=True)
                model.load_state_dict(state)
            else:
                # Seeded init already applied; persist it so later
                # processes serve identical features.
                cached.parent.mkdir(parents=True, exist_ok=True)
                tmp = cached.with_suffix(".tmp")
                torch.save(model.state_dict(), tmp)
                tmp.replace(cached)
        model.head = torch.nn.Identity()
        model.eval()
        self.model = model

    @torch.no_grad()
    def features(self, image_path: str | Path) -> np.ndarray:
        img = Image.open(image_path).convert("RGB")
        if img.size != (INPUT_SIDE, INPUT_SIDE):
            img = img.resize((INPUT_SIDE, INPUT_SIDE), Image.BILINEAR)
        arr = torch.from_numpy(
            np.asarray(img, dtype=np.float32) / 255.0
        ).permute(2, 0, 1)
        arr = (arr - _IMAGENET_MEAN) / _IMAGENET_STD
        out = self.model(arr.unsqueeze(0))
        feats = out.squeeze(0).numpy().astype(np.float64)
        assert feats.shape == (FEATURE_DIM,)
        return feats
