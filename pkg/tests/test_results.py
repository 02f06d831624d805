import json

import numpy as np
import torch

from advface.attacks import AttackResult
from advface.results import load_result, load_results, read_png, run_ids, save_result, to_png


def _result(seed=3):
    g = torch.Generator().manual_seed(seed)
    return AttackResult(
        final_latent=torch.randn(8, 4, generator=g),
        final_noise=[torch.randn(4, 4, generator=g), torch.randn(8, 8, generator=g)],
        image=torch.rand(3, 8, 8, generator=g),
        loss_trace=[{"total": 1.5, "adversarial": 0.25}],
        success_per_classifier={"dense": True, "plain_vgg": False},
        iterations_used=1,
        wall_clock_seconds=0.5,
        start_latent=torch.zeros(8, 4),
        start_noise=[torch.zeros(4, 4), torch.zeros(8, 8)],
        seed=seed,
        metadata={"method": "image_guided", "mixed_latent": torch.ones(2)},
    )


def test_round_trip(tmp_path):
    r = _result()
    paths = save_result(r, tmp_path, "seed000003", {"name": "x"})
    back = load_result(tmp_path, "seed000003")
    assert torch.equal(back.final_latent, r.final_latent.double())
    assert all(torch.equal(a, b.double()) for a, b in zip(back.final_noise, r.final_noise))
    assert torch.equal(back.start_latent, r.start_latent.double())
    assert back.success_per_classifier == r.success_per_classifier
    assert back.loss_trace == r.loss_trace and back.seed == 3
    assert back.metadata["method"] == "image_guided" and back.metadata["config"] == {"name": "x"}
    side = json.loads(open(paths["json"]).read())
    assert "mixed_latent" not in side["metadata"]


def test_png_quantisation(tmp_path):
    img = torch.rand(3, 8, 8)
    back = read_png(to_png(img, tmp_path / "x.png"))
    assert back.shape == (3, 8, 8)
    assert float((back - img).abs().max()) <= 0.5 / 255 + 1e-6


def test_listing(tmp_path):
    for s in (5, 1, 3):
        save_result(_result(s), tmp_path, f"seed{s:06d}")
    assert run_ids(tmp_path) == ["seed000001", "seed000003", "seed000005"]
    assert [r.seed for r in load_results(tmp_path)] == [1, 3, 5]
    assert np.isclose(load_results(tmp_path)[0].wall_clock_seconds, 0.5)
