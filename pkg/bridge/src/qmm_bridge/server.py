"""Line-oriented JSON server: one request per stdin line, one response per
stdout line.

Requests: ``{"op": "hello"}``, ``{"op": "features", "qmm_path": PNG}``,
``{"op": "score", "qmm_path": PNG}``.  Responses always carry ``ok``;
failures carry ``error`` and the process keeps serving.  ``score`` needs
an optional linear probe loaded from ``QMM_BRIDGE_HEAD`` (an .npz with
``w1, b1, w2, b2``).
"""

from __future__ import annotations

import json
import os
import sys

import numpy as np

from .backbone import FEATURE_DIM, Backbone


class Server:
    def __init__(self) -> None:
        self._backbone: Backbone | None = None
        self._head = None

    @property
    def backbone(self) -> Backbone:
        if self._backbone is None:
            self._backbone = Backbone()
        return self._backbone

    def _load_head(self):
        if self._head is None:
            path = os.environ.get("QMM_BRIDGE_HEAD")
            if not path:
                raise RuntimeError("no score head loaded (set QMM_BRIDGE_HEAD)")
            data = np.load(path)
            self._head = (data["w1"], data["b1"], data["w2"], data["b2"])
        return self._head

    def handle(self, request: dict) -> dict:
        op = request.get("op")
        if op == "hello":
            return {"ok": True, "feature_dim": FEATURE_DIM}
        if op == "features":
            feats = self.backbone.features(request["qmm_path"])
            return {"ok": True, "features": [float(v) for v in feats]}
        if op == "score":
            w1, b1, w2, b2 = self._load_head()
            feats = self.backbone.features(request["qmm_path"])
            hidden = np.maximum(w1 @ feats + b1, 0.0)
            return {"ok": True, "score": float(w2 @ hidden + b2)}
        return {"ok": False, "error": f"unknown op {op!r}"}

    def serve(self, stdin=None, stdout=None) -> int:
        stdin = stdin or sys.stdin
        stdout = stdout or sys.stdout
        for line in stdin:
            line = line.strip()
            if not line:
                continue
            try:
                response = self.handle(json.loads(line))
            except Exception as exc:  # keep serving after any bad request
                response = {"ok": False, "error": str(exc)}
            stdout.write(json.dumps(response) + "\n")
            stdout.flush()
        return 0


def main() -> int:
    return Server().serve()


if __name__ == "__main__":
    sys.exit(main())
