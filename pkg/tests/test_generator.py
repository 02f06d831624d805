import pytest
import torch

from advface.generator import (
    LayerGroup,
    StyleGenerator,
    broadcast_to_wplus,
    layer_rows,
    load_generator,
    map_latent,
    row_mask,
    sample_initial,
    sample_initial_batch,
    save_generator,
    synthesize,
)
from advface.validation import InvalidArgumentError


@pytest.mark.parametrize("group,rows", [("coarse", (1, 4)), ("middle", (5, 8)), ("fine", (9, 18)), ("all", (1, 18))])
def test_layer_rows_eighteen(group, rows):
    assert layer_rows(group, 18) == rows


@pytest.mark.parametrize("group,rows", [("coarse", (1, 2)), ("middle", (3, 4)), ("fine", (5, 8))])
def test_layer_rows_desk_depth(group, rows):
    assert layer_rows(LayerGroup(group), 8) == rows


@pytest.mark.parametrize("L", [3, 5, 8, 9, 12, 18, 27])
def test_groups_partition_rows(L):
    masks = [row_mask(g, L) for g in ("coarse", "middle", "fine")]
    total = torch.stack(masks).sum(0)
    assert torch.equal(total, torch.ones(L, dtype=total.dtype))


def test_layer_rows_rejects_bad_inputs():
    with pytest.raises(InvalidArgumentError):
        layer_rows("hair", 18)
    with pytest.raises(InvalidArgumentError):
        layer_rows("fine", 0)
    with pytest.raises(InvalidArgumentError):
        layer_rows("fine", 2)


def test_broadcast_copies_rows():
    w = torch.arange(6.0).reshape(2, 3)
    wp = broadcast_to_wplus(w, 4)
    assert wp.shape == (2, 4, 3)
    assert torch.equal(wp[:, 2], w)


def test_resolutions_double_to_output(gen):
    assert gen.resolutions == [4, 4, 8, 8, 16, 16, 32, 32]
    assert gen.noise_shapes[-1] == (32, 32)


def test_sample_initial_is_seeded(gen):
    w1, n1 = sample_initial(gen, 11)
    w2, n2 = sample_initial(gen, 11)
    w3, _ = sample_initial(gen, 12)
    assert torch.equal(w1, w2) and all(torch.equal(a, b) for a, b in zip(n1, n2))
    assert not torch.equal(w1, w3)
    # W+ is L copies of the mapping output
    assert torch.equal(w1[0], w1[-1])


def test_batch_matches_single(gen):
    wb, nb = sample_initial_batch(gen, [4, 9])
    w, n = sample_initial(gen, 9)
    assert torch.equal(wb[1], w)
    assert all(torch.equal(a[1], b) for a, b in zip(nb, n))


def test_synthesize_range_and_shape(gen):
    w, n = sample_initial(gen, 0)
    img = synthesize(gen, w, n)
    assert img.shape == (3, 32, 32)
    assert float(img.min()) >= 0.0 and float(img.max()) <= 1.0


def test_synthesize_validates_shapes(gen):
    w, n = sample_initial(gen, 0)
    with pytest.raises(InvalidArgumentError):
        synthesize(gen, w[:-1], n)
    with pytest.raises(InvalidArgumentError):
        synthesize(gen, w, n[:-1])
    with pytest.raises(InvalidArgumentError):
        map_latent(gen, torch.zeros(5))


def test_noise_changes_image(gen):
    w, n = sample_initial(gen, 0)
    other = [x + 1.0 for x in n]
    assert not torch.equal(synthesize(gen, w, n), synthesize(gen, w, other))


def test_checkpoint_round_trip(tmp_path, tiny_gen):
    path = save_generator(tiny_gen, tmp_path / "g.pt")
    back = load_generator(path)
    w, n = sample_initial(tiny_gen, 5)
    assert torch.equal(synthesize(tiny_gen, w, n), synthesize(back, w, n))


def test_rejects_bad_image_size():
    with pytest.raises(InvalidArgumentError):
        StyleGenerator(image_size=24)
