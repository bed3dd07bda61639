import numpy as np
import pytest
import torch

from mdfloss import losses
from mdfloss.imaging import save_image
from mdfloss.restoration import (
    PRESETS, Recipe, RestorationDiverged, build_model, dihedral, infer, load_model, make_pairs, recipe_for,
    save_model, train_restoration,
)
from mdfloss.singan import TaskSpec

from conftest import random_image, smooth_image


@pytest.fixture
def image_dirs(tmp_path):
    train, val = tmp_path / "train", tmp_path / "val"
    train.mkdir()
    val.mkdir()
    for i in range(3):
        save_image(train / f"{i}.png", smooth_image(40, 48, seed=i))
    save_image(val / "0.png", smooth_image(40, 40, seed=9))
    save_image(train / "tiny.png", random_image(8, 8))
    (train / "notes.txt").write_text("not an image")
    return train, val


def tiny_recipe(task="denoise", **kw):
    base = dict(patch_size=24, epochs=2, batch_size=8, patches_per_epoch=32, val_patches=16, sigma=25.0)
    base.update(kw)
    return recipe_for(task, toy=True, **base)


def test_dihedral_matches_marker_oracle():
    marker = np.arange(9, dtype=float).reshape(3, 3, 1)
    m = marker[..., 0]
    expected = [m, np.rot90(m), np.rot90(m, 2), np.rot90(m, 3),
                m[:, ::-1], np.rot90(m)[:, ::-1], np.rot90(m, 2)[:, ::-1], np.rot90(m, 3)[:, ::-1]]
    outs = [dihedral(marker, i)[..., 0] for i in range(8)]
    for got, want in zip(outs, expected):
        np.testing.assert_array_equal(got, want)
    assert len({o.tobytes() for o in outs}) == 8


def test_recipes():
    sr = recipe_for("sisr")
    assert (sr.optimizer, sr.schedule, sr.lr, sr.lr_final) == ("adam", "cosine", 1e-3, 1e-5)
    dn = recipe_for("denoise")
    assert dn.optimizer == "sgd" and dn.nesterov and dn.weight_decay == 1e-4
    toy = recipe_for("denoise", toy=True)
    assert (toy.patches_per_epoch, toy.epochs, toy.channels) == (2000, 5, 1)
    assert Recipe.from_dict(toy.to_dict()) == toy
    with pytest.raises(ValueError, match="divisible"):
        recipe_for("sisr", patch_size=50)
    with pytest.raises(ValueError):
        recipe_for("jpeg", epochs=-1)


def test_make_pairs_shapes_and_determinism(image_dirs, caplog):
    train, _ = image_dirs
    rec = tiny_recipe()
    pairs = make_pairs(train, rec.task, rec, epoch=0)
    assert len(pairs) == 32
    assert pairs[0][0].shape == pairs[0][1].shape == (24, 24, 1)
    assert "smaller than" in caplog.text
    again = make_pairs(train, rec.task, rec, epoch=0)
    assert all(np.array_equal(a[0], b[0]) for a, b in zip(pairs, again))
    other = make_pairs(train, rec.task, rec, epoch=1)
    assert not np.array_equal(pairs[0][1], other[0][1])
    sr = tiny_recipe("sisr", channels=1)
    lr, hr = make_pairs(train, sr.task, sr, count=2)[0]
    assert lr.shape == (6, 6, 1) and hr.shape == (24, 24, 1)


def test_zero_noise_pairs_are_identity(image_dirs):
    train, _ = image_dirs
    rec = tiny_recipe(sigma=0.0)
    for inp, target in make_pairs(train, rec.task, rec, count=4):
        np.testing.assert_array_equal(inp, target)


def test_no_usable_images(tmp_path):
    save_image(tmp_path / "a.png", random_image(8, 8))
    rec = tiny_recipe()
    with pytest.raises(ValueError, match="no usable"):
        make_pairs(tmp_path, rec.task, rec)


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_presets_build_and_run(name):
    scale = 1 if name.startswith("dncnn") else 2
    model = build_model(name, 1, scale, seed=0)
    with torch.no_grad():
        out = model(torch.rand(1, 1, 12, 12))
    assert out.shape == (1, 1, 12 * scale, 12 * scale)


def test_untrained_dncnn_is_identity():
    model = build_model("dncnn-s", 1)
    img = random_image(20, 20)
    np.testing.assert_allclose(infer(model, img), img, atol=1e-6)


def test_seeded_initialization():
    a = build_model("edsr-s", 3, 4, seed=5)
    b = build_model("edsr-s", 3, 4, seed=5)
    assert all(torch.equal(p, q) for p, q in zip(a.parameters(), b.parameters()))


@pytest.mark.parametrize("name,scale", [("dncnn-s", 1), ("edsr-s", 2)])
def test_tiled_inference_matches_whole_image(name, scale):
    model = build_model(name, 1, scale, seed=1)
    if name.startswith("dncnn"):
        torch.nn.init.normal_(model.body[-1].weight, 0, 0.05, generator=torch.Generator().manual_seed(0))
    img = smooth_image(70, 90)
    whole = infer(model, img, tile=512)
    tiled = infer(model, img, tile=32, overlap=16)
    assert whole.shape == (70 * scale, 90 * scale, 1)
    assert np.abs(whole - tiled).max() < 1e-4


def test_sr_output_shape():
    model = build_model("edsr-s", 3, 4)
    assert infer(model, random_image(12, 15, 3)).shape == (48, 60, 3)
    with pytest.raises(ValueError, match="3-channel"):
        infer(model, random_image(12, 15, 1))


def test_zero_epochs_returns_empty_history(image_dirs):
    train, val = image_dirs
    result = train_restoration(build_model("dncnn-s", 1), losses.BUILTIN["l2"], tiny_recipe(epochs=0), train, val)
    assert result.history == [] and result.initial_val_loss > 0


def test_smoke_training_reduces_loss_and_is_reproducible(image_dirs):
    train, val = image_dirs
    rec = tiny_recipe(epochs=3, patches_per_epoch=64)
    a = train_restoration(build_model("dncnn-s", 1), losses.BUILTIN["l2"], rec, train, val)
    assert [h["epoch"] for h in a.history] == [1, 2, 3]
    assert min(h["val_loss"] for h in a.history) < a.initial_val_loss
    b = train_restoration(build_model("dncnn-s", 1), losses.BUILTIN["l2"], rec, train, val)
    assert a.history == b.history


def test_resume_continues_numbering(image_dirs, tmp_path):
    train, val = image_dirs
    ck = tmp_path / "ck"
    first = train_restoration(build_model("dncnn-s", 1), losses.BUILTIN["l2"], tiny_recipe(epochs=1), train, val, ck)
    assert len(first.history) == 1
    resumed = train_restoration(build_model("dncnn-s", 1), losses.BUILTIN["l2"], tiny_recipe(epochs=3), train, val,
                                ck, resume=True)
    assert [h["epoch"] for h in resumed.history] == [1, 2, 3]
    straight = train_restoration(build_model("dncnn-s", 1), losses.BUILTIN["l2"], tiny_recipe(epochs=3), train, val)
    np.testing.assert_allclose([h["val_loss"] for h in resumed.history],
                               [h["val_loss"] for h in straight.history], rtol=1e-5)


def test_divergence_reverts_weights(image_dirs):
    train, val = image_dirs
    bad = losses.LossFunction("nan", lambda x, y: (y - x).mean() * float("nan"))
    model = build_model("dncnn-s", 1)
    before = [p.clone() for p in model.parameters()]
    with pytest.raises(RestorationDiverged) as info:
        train_restoration(model, bad, tiny_recipe(), train, val)
    assert info.value.result.history == []
    assert all(torch.equal(p, q) for p, q in zip(before, model.parameters()))


def test_model_round_trip(tmp_path):
    model = build_model("srresnet-s", 1, 2, seed=3)
    save_model(model, tmp_path / "m", {"note": "x"})
    again, meta = load_model(tmp_path / "m")
    img = random_image(16, 16)
    np.testing.assert_array_equal(infer(model, img), infer(again, img))
    assert meta["note"] == "x"
