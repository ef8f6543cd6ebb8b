"""Build the tiny CLIP vision bundle used by the ViT backend tests.

Writes a randomly initialised, deterministic CLIPVisionModel in the bundle
layout (model.safetensors + metadata.json) together with reference.json, which
holds the CLS vector of every hidden state for a few fixed inputs as computed
by transformers itself.

    python scripts/make_tiny_vit_fixture.py crates/core/tests/data/tiny_vit
"""

import json
import math
import sys
from pathlib import Path

import torch
from safetensors.torch import save_file
from transformers import CLIPVisionConfig, CLIPVisionModel

MEAN = [0.48145466, 0.4578275, 0.40821073]
STD = [0.26862954, 0.26130258, 0.27577711]


def test_images(size):
    """Pixel values in [0, 1] (plus one out-of-range image), HWC nested lists."""
    images = []
    for k in range(3):
        img = [
            [
                [
                    0.5
                    + 0.4 * math.sin(0.37 * (r + 1) * (k + 1) + 0.11 * c * (ch + 1))
                    * math.cos(0.05 * c * r + k)
                    for ch in range(3)
                ]
                for c in range(size)
            ]
            for r in range(size)
        ]
        images.append(img)
    # Perturbed inputs may leave [0, 1].
    images.append([[[1.2 if (r + c) % 2 else -0.15 for _ in range(3)] for c in range(size)] for r in range(size)])
    return images


def main(out_dir: Path, act: str, norm: str):
    torch.manual_seed(1234)
    cfg = CLIPVisionConfig(
        hidden_size=32,
        intermediate_size=64,
        num_hidden_layers=3,
        num_attention_heads=4,
        image_size=28,
        patch_size=14,
        hidden_act=act,
        layer_norm_eps=1e-5,
    )
    model = CLIPVisionModel(cfg).eval()
    # Random init leaves layer norms at identity; perturb them so the test
    # exercises the affine parameters too.
    with torch.no_grad():
        for name, p in model.named_parameters():
            if "norm" in name:
                p.add_(0.1 * torch.randn_like(p))
    out_dir.mkdir(parents=True, exist_ok=True)
    state = {k: v.contiguous() for k, v in model.state_dict().items() if "position_ids" not in k}
    save_file(state, str(out_dir / "model.safetensors"))

    meta = {
        "format_version": 1,
        "architecture": "clip-vit",
        "weights_file": "model.safetensors",
        "tensor_prefix": "",
        "input_size": cfg.image_size,
        "patch_size": cfg.patch_size,
        "image_mean": MEAN,
        "image_std": STD,
        "layer_count": cfg.num_hidden_layers,
        "embed_dim": cfg.hidden_size,
        "num_heads": cfg.num_attention_heads,
        "mlp_dim": cfg.intermediate_size,
        "cls_token_index": 0,
        "layer_norm_eps": cfg.layer_norm_eps,
        "hidden_act": act,
        "hidden_state_norm": norm,
        "source": "random-init tiny CLIPVisionModel (test fixture)",
    }
    (out_dir / "metadata.json").write_text(json.dumps(meta, indent=2) + "\n")

    images = test_images(cfg.image_size)
    mean = torch.tensor(MEAN).view(1, 3, 1, 1)
    std = torch.tensor(STD).view(1, 3, 1, 1)
    pixels = torch.tensor(images, dtype=torch.float64).permute(0, 3, 1, 2)
    pixels = ((pixels - mean.double()) / std.double()).float()
    with torch.no_grad():
        out = model(pixel_values=pixels, output_hidden_states=True)
    assert len(out.hidden_states) == cfg.num_hidden_layers + 1
    with torch.no_grad():
        first = model.pre_layrnorm(model.embeddings(pixels))
    assert torch.allclose(first, out.hidden_states[0]), "hidden state 0 convention changed"
    cls = []
    for hs in out.hidden_states:
        v = hs[:, 0, :]
        if norm == "post_layernorm":
            v = model.post_layernorm(v)
        cls.append(v.tolist())
    ref = {"images": images, "cls_by_layer": cls}
    (out_dir / "reference.json").write_text(json.dumps(ref) + "\n")


if __name__ == "__main__":
    root = Path(sys.argv[1])
    main(root, "quick_gelu", "none")
    main(root.parent / (root.name + "_gelu_post"), "gelu", "post_layernorm")
