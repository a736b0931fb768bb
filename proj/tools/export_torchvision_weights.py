#!/usr/bin/env python3
"""Write ImageNet-pretrained backbone weights as <out>/<backbone>.ltlw.

Only the convolutional backbone is exported; heads are always initialised
fresh. Layouts already match (conv OIHW, dense [out, in]), so tensors are
copied as little-endian float32 without transposition.
"""

import argparse
import struct
from pathlib import Path

import torch
import torchvision


def vgg_names(features):
    names, block, index = [], 1, 1
    for module in features:
        if isinstance(module, torch.nn.Conv2d):
            names.append((f"conv{block}_{index}", module))
            index += 1
        elif isinstance(module, torch.nn.MaxPool2d):
            block, index = block + 1, 1
    return names


def alexnet_names(features):
    convs = [m for m in features if isinstance(m, torch.nn.Conv2d)]
    return [(f"conv{i + 1}", m) for i, m in enumerate(convs)]


BACKBONES = {
    "vgg16": (lambda: torchvision.models.vgg16(weights="IMAGENET1K_V1"), vgg_names),
    "vgg19": (lambda: torchvision.models.vgg19(weights="IMAGENET1K_V1"), vgg_names),
    "alexnet_modified": (lambda: torchvision.models.alexnet(weights="IMAGENET1K_V1"), alexnet_names),
}


def write_ltlw(path, tensors):
    with open(path, "wb") as out:
        out.write(b"LTLW")
        out.write(struct.pack("<II", 1, len(tensors)))
        for name, tensor in tensors:
            data = tensor.detach().to(torch.float32).contiguous().cpu()
            encoded = name.encode()
            out.write(struct.pack("<I", len(encoded)))
            out.write(encoded)
            out.write(struct.pack("<I", data.dim()))
            for d in data.shape:
                out.write(struct.pack("<Q", d))
            out.write(data.numpy().astype("<f4").tobytes())


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True, type=Path, help="cache directory (LESIONTL_CACHE)")
    parser.add_argument("backbones", nargs="*", default=sorted(BACKBONES), choices=sorted(BACKBONES))
    args = parser.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    for backbone in args.backbones:
        make, namer = BACKBONES[backbone]
        model = make().eval()
        tensors = []
        for name, conv in namer(model.features):
            tensors.append((f"{name}.weight", conv.weight))
            tensors.append((f"{name}.bias", conv.bias))
        path = args.out / f"{backbone}.ltlw"
        write_ltlw(path, tensors)
        print(f"{backbone}: {len(tensors)} tensors -> {path}")


if __name__ == "__main__":
    main()
