#!/usr/bin/env python3
"""Export ImageNet ResNet-18 weights to the encoder checkpoint format read by
`load_checkpoint`, for runs with model.pretrained = true.

Usage:
  export_resnet18_weights.py OUT.ipsckpt                      # torchvision IMAGENET1K_V1 (downloads)
  export_resnet18_weights.py OUT.ipsckpt --state-dict r18.pth # a saved torchvision state_dict

The classifier (fc.*) is dropped; every other tensor keeps its torchvision name,
which matches the encoder's module names.
"""
import argparse
import json
import struct
from pathlib import Path

import numpy as np
import torch

MAGIC = b"IPSCKPT\0"
VERSION = 1
DTYPES = {torch.float32: (0, np.float32), torch.float64: (1, np.float64), torch.int64: (2, np.int64)}
BUFFER_SUFFIXES = ("running_mean", "running_var", "num_batches_tracked")


def load_state(args):
    if args.state_dict:
        return torch.load(args.state_dict, map_location="cpu")
    import torchvision

    return torchvision.models.resnet18(weights=torchvision.models.ResNet18_Weights.IMAGENET1K_V1).state_dict()


def write_archive(path, tensors, meta):
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        blob = json.dumps(meta).encode()
        f.write(struct.pack("<Q", len(blob)))
        f.write(blob)
        f.write(struct.pack("<I", len(tensors)))
        for name, t in tensors:
            code, np_type = DTYPES[t.dtype]
            raw = name.encode()
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
            f.write(struct.pack("<BB", code, t.dim()))
            f.write(struct.pack(f"<{t.dim()}q", *t.shape))
            f.write(t.contiguous().numpy().astype(np.dtype(np_type).newbyteorder("<")).tobytes())


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("out")
    ap.add_argument("--state-dict")
    args = ap.parse_args()

    state = {k: v for k, v in load_state(args).items() if not k.startswith("fc.")}
    params = [(k, v) for k, v in state.items() if not k.endswith(BUFFER_SUFFIXES)]
    buffers = [(k, v) for k, v in state.items() if k.endswith(BUFFER_SUFFIXES)]
    meta = {"source": "torchvision resnet18 IMAGENET1K_V1" if not args.state_dict else str(args.state_dict)}
    write_archive(Path(args.out), params + buffers, meta)
    print(f"wrote {len(params) + len(buffers)} tensors to {args.out}")


if __name__ == "__main__":
    main()
