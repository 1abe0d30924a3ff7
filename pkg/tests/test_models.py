import json

import numpy as np
import pytest

from cntlab.errors import ConfigError, ShapeError, UsageError, ValidationError
from cntlab.models import Model, ModelConfig, load_checkpoint, save_checkpoint
from cntlab.noise import NoiseSchedule


def small_cfg(mode, backbone="mlp", **kw):
    base = dict(
        backbone=backbone,
        channels=8,
        num_blocks=2,
        activation="mish",
        heads=[3],
        mode=mode,
        dropout_p=0.0,
        norm_kind="group",
        num_groups=2,
        embed_width=16,
        num_frequencies=4,
    )
    base.update(kw)
    return ModelConfig(**base)


def cond_inputs(rng, n, width):
    return rng.normal(size=(n, width)), rng.random(n)


# ----------------------------------------------------------------------
# identity at initialization


@pytest.mark.parametrize("mode", ["cnt", "only-noise"])
def test_identity_at_init_mlp(mode, rng):
    base = Model(small_cfg("baseline"), 5, seed=7)
    cond = Model(small_cfg(mode), 5, seed=7)
    x = rng.normal(size=(6, 5))
    y, t = cond_inputs(rng, 6, 3)
    for a, b in zip(base.forward(x), cond.forward(x, y_noisy=y, t=t)):
        assert np.abs(a.data - b.data).max() < 1e-12


def test_identity_at_init_smallcnn(rng):
    base = Model(small_cfg("baseline", backbone="smallcnn", num_blocks=4), (1, 8, 8), seed=3)
    cond = Model(small_cfg("cnt", backbone="smallcnn", num_blocks=4), (1, 8, 8), seed=3)
    x = rng.normal(size=(4, 1, 8, 8))
    y, t = cond_inputs(rng, 4, 3)
    for a, b in zip(base.forward(x), cond.forward(x, y_noisy=y, t=t)):
        assert np.abs(a.data - b.data).max() < 1e-12


def test_identity_survives_conditioning_values(rng):
    # at init the projections are zero, so ANY conditioning input is inert
    cond = Model(small_cfg("cnt"), 5, seed=1)
    x = rng.normal(size=(6, 5))
    y1, t1 = cond_inputs(rng, 6, 3)
    y2, t2 = cond_inputs(rng, 6, 3)
    a = cond.forward(x, y_noisy=y1, t=t1)
    b = cond.forward(x, y_noisy=y2 * 50.0, t=t2)
    for u, v in zip(a, b):
        assert np.abs(u.data - v.data).max() < 1e-12


# ----------------------------------------------------------------------
# forward contract


def test_baseline_ignores_conditioning(rng):
    m = Model(small_cfg("baseline"), 5, seed=0)
    x = rng.normal(size=(6, 5))
    y, t = cond_inputs(rng, 6, 3)
    plain = m.forward(x)
    noisy = m.forward(x, y_noisy=y, t=t)
    for a, b in zip(plain, noisy):
        assert np.array_equal(a.data, b.data)


def test_forward_head_shapes(rng):
    m = Model(small_cfg("baseline", heads=[4, 2]), 5, seed=0)
    out = m.forward(rng.normal(size=(7, 5)))
    assert [o.shape for o in out] == [(7, 4), (7, 2)]


def test_conditioned_forward_needs_inputs(rng):
    m = Model(small_cfg("cnt"), 5, seed=0)
    x = rng.normal(size=(3, 5))
    with pytest.raises(UsageError, match="y_noisy, t"):
        m.forward(x)
    with pytest.raises(UsageError, match="t"):
        m.forward(x, y_noisy=np.zeros((3, 3)))


def test_training_dropout_needs_rng(rng):
    m = Model(small_cfg("baseline", dropout_p=0.3), 5, seed=0)
    x = rng.normal(size=(3, 5))
    with pytest.raises(UsageError):
        m.forward(x, training=True)
    m.forward(x, training=True, rng=np.random.default_rng(0))  # fine with rng
    m.forward(x)  # eval path never needs one


def test_forward_shape_errors(rng):
    m = Model(small_cfg("baseline"), 5, seed=0)
    with pytest.raises(ShapeError):
        m.forward(np.ones((3, 4)))
    with pytest.raises(ShapeError):
        m.forward(np.ones(5))
    c = Model(small_cfg("baseline", backbone="smallcnn", num_blocks=2), (1, 6, 6), seed=0)
    with pytest.raises(ShapeError):
        c.forward(np.ones((2, 1, 6, 5)))


def test_predict_rng_contract(rng):
    x = rng.normal(size=(4, 5))
    base = Model(small_cfg("baseline"), 5, seed=0)
    out = base.predict(x)
    assert np.array_equal(out[0], base.forward(x)[0].data)
    cond = Model(small_cfg("cnt"), 5, seed=0)
    with pytest.raises(UsageError):
        cond.predict(x)
    a = cond.predict(x, rng=np.random.default_rng(5))
    b = cond.predict(x, rng=np.random.default_rng(5))
    assert np.array_equal(a[0], b[0])


def test_predict_draw_varies_after_training_starts(rng):
    # give the conditioning path real weight so different noise draws matter
    m = Model(small_cfg("cnt"), 5, seed=0)
    for p in m.parameters():
        if "w_gamma" in p.name or "w_beta" in p.name:
            p.tensor.data[...] = rng.normal(size=p.shape) * 0.3
    x = rng.normal(size=(4, 5))
    a = m.predict(x, rng=np.random.default_rng(1))
    b = m.predict(x, rng=np.random.default_rng(2))
    assert not np.array_equal(a[0], b[0])


# ----------------------------------------------------------------------
# parameters and state


def test_parameter_counts_split():
    base = Model(small_cfg("baseline"), 5, seed=0)
    cond = Model(small_cfg("cnt"), 5, seed=0)
    for m in (base, cond):
        counts = m.parameter_counts()
        assert counts["total"] == sum(p.data.size for p in m.parameters())
        assert counts["total"] == counts["backbone"] + counts["conditioning"]
    assert base.parameter_counts()["conditioning"] == 0
    expected = sum(p.data.size for p in cond.embedder.parameters())
    for _, _, norm, _ in cond.blocks:
        expected += sum(p.data.size for p in norm.parameters())
    assert cond.parameter_counts()["conditioning"] == expected


def test_same_seed_shares_backbone_weights():
    base = {p.name: p.data for p in Model(small_cfg("baseline"), 5, seed=9).parameters()}
    cond = {p.name: p.data for p in Model(small_cfg("cnt"), 5, seed=9).parameters()}
    shared = set(base) & set(cond)
    assert any(name.startswith("backbone.") for name in shared)
    assert any(name.startswith("head") for name in shared)
    for name in shared:
        assert np.array_equal(base[name], cond[name]), name


def test_unique_parameter_names():
    m = Model(small_cfg("cnt", backbone="smallcnn", num_blocks=4), (1, 8, 8), seed=0)
    names = [p.name for p in m.parameters()]
    assert len(names) == len(set(names))


def test_state_arrays_include_batch_running_stats():
    m = Model(small_cfg("baseline", norm_kind="batch", num_groups=1), 5, seed=0)
    names = [n for n, _ in m.state_arrays()]
    assert "backbone.block0.norm.running_mean" in names
    assert "backbone.block1.norm.running_var" in names


def test_load_state_validation(rng):
    m = Model(small_cfg("baseline"), 5, seed=0)
    good = {n: a.copy() for n, a in m.state_arrays()}
    first = next(iter(good))
    missing = dict(good)
    del missing[first]
    with pytest.raises(ValidationError, match="missing"):
        m.load_state(missing)
    bad = dict(good)
    bad[first] = np.zeros((1, 1, 1))
    with pytest.raises(ValidationError, match="shape"):
        m.load_state(bad)


# ----------------------------------------------------------------------
# checkpoints


def test_checkpoint_roundtrip(tmp_path, rng):
    cfg = small_cfg("cnt", backbone="smallcnn", num_blocks=2, norm_kind="batch",
                    num_groups=1, dropout_p=0.1)
    m = Model(cfg, (1, 6, 6), NoiseSchedule(mode="cnt"), seed=11)
    for p in m.parameters():
        p.tensor.data[...] = rng.normal(size=p.shape)
    # run one training forward so batch-norm running stats are non-trivial
    x = rng.normal(size=(4, 1, 6, 6))
    y, t = cond_inputs(rng, 4, 3)
    m.forward(x, y_noisy=y, t=t, training=True, rng=np.random.default_rng(0))

    json_path, bin_path = save_checkpoint(m, tmp_path / "ck")
    loaded = load_checkpoint(json_path)
    assert loaded.config == m.config
    assert loaded.seed == m.seed
    assert loaded.input_shape == m.input_shape
    assert loaded.schedule == m.schedule
    for (na, a), (nb, b) in zip(m.state_arrays(), loaded.state_arrays()):
        assert na == nb
        assert np.array_equal(a, b), na
    for a, b in zip(m.forward(x, y_noisy=y, t=t), loaded.forward(x, y_noisy=y, t=t)):
        assert np.array_equal(a.data, b.data)


def test_checkpoint_roundtrip_baseline_mlp(tmp_path, rng):
    m = Model(small_cfg("baseline"), 5, seed=2)
    save_checkpoint(m, tmp_path / "b")
    loaded = load_checkpoint(tmp_path / "b.json")
    assert loaded.schedule is None
    x = rng.normal(size=(3, 5))
    assert np.array_equal(m.forward(x)[0].data, loaded.forward(x)[0].data)


def test_checkpoint_rejects_unknown_format(tmp_path):
    m = Model(small_cfg("baseline"), 5, seed=0)
    json_path, _ = save_checkpoint(m, tmp_path / "ck")
    manifest = json.loads(open(json_path).read())
    manifest["format"] = "something-else"
    with open(json_path, "w") as fh:
        json.dump(manifest, fh)
    with pytest.raises(ValidationError, match="format"):
        load_checkpoint(json_path)


# ----------------------------------------------------------------------
# configuration errors


def test_model_config_validation():
    bad = [
        dict(backbone="resnet"),
        dict(activation="gelu"),
        dict(mode="finetune"),
        dict(heads=[]),
        dict(heads=[1]),
        dict(channels=0),
        dict(num_blocks=0),
        dict(dropout_p=1.0),
        dict(dropout_p=-0.2),
    ]
    for kw in bad:
        mode = kw.pop("mode", "baseline")
        with pytest.raises(ConfigError):
            Model(small_cfg(mode, **kw), 5, seed=0)


def test_input_shape_validation():
    with pytest.raises(ConfigError):
        Model(small_cfg("baseline"), (1, 8, 8), seed=0)  # mlp wants an int
    with pytest.raises(ConfigError):
        Model(small_cfg("baseline", backbone="smallcnn"), 8, seed=0)
    with pytest.raises(ConfigError):
        Model(small_cfg("baseline", backbone="smallcnn"), (1, 8), seed=0)
    # 6 -> 3 after one pool, second pool hits an odd extent
    with pytest.raises(ConfigError, match="downsampled"):
        Model(small_cfg("baseline", backbone="smallcnn", num_blocks=4), (1, 6, 6), seed=0)


def test_schedule_mode_mismatch():
    with pytest.raises(ConfigError, match="does not match"):
        Model(small_cfg("cnt"), 5, NoiseSchedule(mode="only-noise"), seed=0)
    # baseline accepts any schedule silently (it never uses one)
    Model(small_cfg("baseline"), 5, NoiseSchedule(mode="only-noise"), seed=0)
