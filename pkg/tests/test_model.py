import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from divfuse.errors import ConfigurationError, DimensionError, IngestError
from divfuse.model import (
    Features,
    ModelConfig,
    ModelParams,
    attention_pool,
    bilstm_encode,
    encode_text,
    forward,
    fuse,
    gradient_check,
    numeric_gradient,
    relative_errors,
    init_params,
    load_checkpoint,
    param_shapes,
    save_checkpoint,
)
from divfuse.training import sample_loss_and_grad

from conftest import small_config

vec = arrays(np.float64, 6, elements=st.floats(-10, 10))


def random_features(cfg, rng, t_v=5, t_a=4):
    return Features(
        visual=rng.uniform(0, 1, (t_v, cfg.input_dims["visual"])),
        audio=rng.standard_normal((t_a, cfg.input_dims["audio"])),
        text=rng.standard_normal(cfg.input_dims["text"]),
    )


def test_zero_params_bilstm_outputs_zero():
    cfg = small_config()
    params = ModelParams(param_shapes(cfg))
    out = bilstm_encode(np.random.default_rng(0).standard_normal((7, 3)), params, "visual", cfg)
    assert out.shape == (7, 6)
    assert np.all(out == 0)


def test_full_size_bilstm_shape_t1():
    cfg = ModelConfig.for_data()
    params = init_params(cfg, 0)
    out = bilstm_encode(np.ones((1, 20)), params, "visual", cfg)
    assert out.shape == (1, 128)


def test_bilstm_dimension_mismatch():
    cfg = small_config()
    with pytest.raises(DimensionError):
        bilstm_encode(np.ones((4, 7)), init_params(cfg, 0), "visual", cfg)


def test_backward_direction_is_reversed_forward():
    cfg = small_config(lstm_layers=1)
    params = init_params(cfg, 3)
    swapped = params.copy()
    for name in ("visual.l0.w_ih", "visual.l0.w_hh", "visual.l0.b"):
        swapped[name] = params[name][::-1].copy()
    seq = np.random.default_rng(1).standard_normal((6, 3))
    H = cfg.lstm_hidden
    out = bilstm_encode(seq, params, "visual", cfg)
    rev = bilstm_encode(seq[::-1], swapped, "visual", cfg)
    np.testing.assert_allclose(out[:, H:], rev[::-1, :H], rtol=0, atol=1e-15)


def test_attention_uniform_scores_give_mean():
    Hm = np.random.default_rng(0).standard_normal((5, 4))
    np.testing.assert_allclose(attention_pool(Hm, np.ones((2, 4)), np.zeros(2)), Hm.mean(axis=0), atol=1e-15)


def test_attention_dominant_score_selects_row():
    Hm = np.random.default_rng(1).uniform(-1, 1, (4, 3))
    Hm[2, 0] = 10.0  # tanh(10) ~ 1, others tanh(<=1) < 0.77
    w = np.array([[1.0, 0.0, 0.0]])
    v = np.array([100.0])  # score gap >= 100 * (1 - 0.77) > 30
    np.testing.assert_allclose(attention_pool(Hm, w, v), Hm[2], atol=1e-9)


def test_attention_single_step():
    Hm = np.array([[0.3, -2.0, 5.0]])
    rng = np.random.default_rng(2)
    np.testing.assert_array_equal(attention_pool(Hm, rng.standard_normal((4, 3)), rng.standard_normal(4)), Hm[0])


def test_encode_text_zero_and_identity():
    cfg = ModelConfig.for_data(proj_activation="identity")
    params = ModelParams(param_shapes(cfg))
    text = np.random.default_rng(0).standard_normal(768)
    assert np.all(encode_text(text, params, cfg) == 0)
    params["text.proj.w"][:, :128] = np.eye(128)
    out = encode_text(text, params, cfg)
    assert out.shape == (128,)
    np.testing.assert_array_equal(out, text[:128])
    with pytest.raises(DimensionError):
        encode_text(text[:100], params, cfg)


def test_fuse_hand_example():
    h_v, h_a, h_t = np.array([1.0, 2.0]), np.array([3.0, 1.0]), np.array([0.0, 0.0])
    np.testing.assert_array_equal(fuse(h_v, h_a, h_t, "B"), [2, 1, 1, 2, 3, 1])
    np.testing.assert_array_equal(fuse(h_v, h_a, h_t, "A"), [1, 2, 3, 1, 0, 0])
    c = fuse(h_v, h_a, h_t, "C")
    assert c.shape == (12,)
    np.testing.assert_array_equal(c, [1, 2, 3, 1, 0, 0, 2, 1, 1, 2, 3, 1])


def test_fuse_identical_embeddings_zero():
    h = np.random.default_rng(0).standard_normal(128)
    f = fuse(h, h, h, "B")
    assert f.shape == (384,) and np.all(f == 0)


def test_fuse_shape_error():
    with pytest.raises(DimensionError):
        fuse(np.ones(3), np.ones(3), np.ones(4), "A")
    with pytest.raises(ConfigurationError):
        fuse(np.ones(3), np.ones(3), np.ones(3), "D")


@settings(max_examples=60)
@given(vec, vec, vec, vec)
def test_fuse_b_invariants(h_v, h_a, h_t, c):
    f = fuse(h_v, h_a, h_t, "B")
    assert np.all(f >= 0)
    np.testing.assert_array_equal(fuse(h_a, h_v, h_t, "B")[:6], f[:6])
    np.testing.assert_array_equal(fuse(h_v, h_a, h_t, "B"), fuse(h_v, h_a, h_t, "B"))
    # common translation: compare against |x - y| computed on the translated values
    t = fuse(h_v + c, h_a + c, h_t + c, "B")
    want = np.concatenate([np.abs((h_v + c) - (h_a + c)), np.abs((h_v + c) - (h_t + c)), np.abs((h_a + c) - (h_t + c))])
    np.testing.assert_array_equal(t, want)
    np.testing.assert_allclose(t, f, atol=1e-12)


@settings(max_examples=30)
@given(vec, vec, vec)
def test_fuse_a_recovers_inputs(h_v, h_a, h_t):
    f = fuse(h_v, h_a, h_t, "A")
    np.testing.assert_array_equal(f[:6], h_v)
    np.testing.assert_array_equal(f[6:12], h_a)
    np.testing.assert_array_equal(f[12:], h_t)


def test_fuse_b_not_injective():
    rng = np.random.default_rng(5)
    h_v, h_a, h_t = rng.standard_normal((3, 4))
    assert not np.array_equal(h_v, -h_v)
    np.testing.assert_array_equal(fuse(h_v, h_a, h_t, "B"), fuse(-h_v, -h_a, -h_t, "B"))


@pytest.mark.parametrize("fusion, modalities, width", [
    ("A", ("visual",), 4), ("A", ("visual", "audio", "text"), 12),
    ("B", ("visual", "audio", "text"), 12), ("C", ("visual", "audio", "text"), 24),
    ("B", ("audio", "text"), 4),
])
def test_fused_dim(fusion, modalities, width):
    assert small_config(fusion, modalities).fused_dim == width


def test_unimodal_divergence_rejected():
    with pytest.raises(ConfigurationError):
        small_config("B", ("visual",))


def test_forward_eval_deterministic():
    cfg = ModelConfig.for_data(fusion="C")
    params = init_params(cfg, 1)
    x = random_features(cfg, np.random.default_rng(0), 9, 7)
    a = forward(x, params, cfg, "eval")
    b = forward(x, params, cfg, "eval")
    assert np.isfinite(a)
    assert a == b


def test_forward_train_without_dropout_equals_eval():
    cfg = small_config("C", dropout_p=0.0)
    params = init_params(cfg, 2)
    x = random_features(cfg, np.random.default_rng(1))
    assert forward(x, params, cfg, "train", np.random.default_rng(9)) == forward(x, params, cfg, "eval")


def test_train_mode_dropout_needs_rng_and_changes_output():
    cfg = small_config("A", dropout_p=0.5)
    params = init_params(cfg, 2)
    x = random_features(cfg, np.random.default_rng(1))
    with pytest.raises(ConfigurationError):
        forward(x, params, cfg, "train")
    outs = {forward(x, params, cfg, "train", np.random.default_rng(s)) for s in range(8)}
    assert len(outs) > 1


def test_forward_tied_embeddings_reduce_to_head_bias_path():
    cfg = small_config("B")
    params = init_params(cfg, 4)
    for m in ("visual", "audio", "text"):
        params[f"{m}.proj.w"] = 0.0
        params[f"{m}.proj.b"] = np.linspace(-0.5, 0.5, cfg.proj_dim)
    x = random_features(cfg, np.random.default_rng(3))
    h1 = np.tanh(params["head.l0.b"])
    h2 = np.tanh(params["head.l1.w"] @ h1 + params["head.l1.b"])
    expected = float((params["head.l2.w"] @ h2 + params["head.l2.b"])[0])
    assert forward(x, params, cfg) == pytest.approx(expected, abs=1e-14)


def test_forward_missing_modality():
    cfg = small_config()
    with pytest.raises(DimensionError):
        forward(Features(visual=np.ones((2, 3))), init_params(cfg, 0), cfg)


def _loss_fn(cfg, pos_weight=1.3):
    def fn(params, sample):
        x, y = sample
        return sample_loss_and_grad(params, cfg, x, y, pos_weight)
    return fn


def _compare(params, sample, loss_fn, indices=None):
    _, grads = loss_fn(params, sample)
    idx = np.arange(len(params)) if indices is None else np.asarray(indices)
    return grads.flat[idx], numeric_gradient(params, sample, loss_fn, 1e-5, idx)


@pytest.mark.parametrize("fusion", ["A", "B", "C"])
@pytest.mark.parametrize("seed", [0, 1])
def test_gradients_match_central_differences(fusion, seed):
    rng = np.random.default_rng(100 + seed)
    cfg = small_config(fusion)
    params = init_params(cfg, rng)
    x = random_features(cfg, rng, int(rng.integers(1, 9)), int(rng.integers(1, 9)))
    analytic, numeric = _compare(params, (x, seed % 2), _loss_fn(cfg))
    # central differences at eps=1e-5 carry ~1e-11 of round-off on an O(1) loss
    np.testing.assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-9)
    big = np.abs(analytic) > 1e-6
    assert relative_errors(analytic[big], numeric[big]).max() < 1e-4


def test_gradient_check_restores_params():
    cfg = small_config("B")
    params = init_params(cfg, 0)
    before = params.flat.copy()
    gradient_check(params, (random_features(cfg, np.random.default_rng(0)), 1), _loss_fn(cfg), 1e-5, indices=range(20))
    assert np.array_equal(before, params.flat)


def test_gradient_check_quadratic_toy():
    params = ModelParams({"w": (4,), "b": (1,)}, np.array([0.3, -1.2, 2.0, 0.7, 0.1]))
    target = np.array([1.0, 0.5, -0.5, 2.0])

    def loss_fn(p, x):
        r = p["w"] * x + p["b"] - target
        g = ModelParams(p.shapes)
        g["w"] = r * x
        g["b"] = r.sum()
        return 0.5 * float(r @ r), g

    assert gradient_check(params, np.array([1.0, 2.0, -1.0, 0.5]), loss_fn, 1e-5) < 1e-9


def test_gradient_check_zero_params_bias_terms():
    cfg = small_config("C")
    params = ModelParams(param_shapes(cfg))
    x = random_features(cfg, np.random.default_rng(8))
    bias_idx = [i for name in params.keys() if name.endswith(".b")
                for i in range(params.slice_of(name).start, params.slice_of(name).stop)]
    assert gradient_check(params, (x, 1), _loss_fn(cfg), 1e-5, indices=bias_idx) < 1e-9


def test_gradients_full_size_sampled():
    cfg = ModelConfig.for_data(fusion="C", dropout_p=0.0)
    rng = np.random.default_rng(11)
    params = init_params(cfg, rng)
    x = random_features(cfg, rng, 4, 4)
    idx = rng.choice(len(params), size=150, replace=False)
    analytic, numeric = _compare(params, (x, 0), _loss_fn(cfg), idx)
    np.testing.assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-9)


def test_relative_error_floor():
    assert relative_errors([0.0], [0.0]).tolist() == [0.0]
    assert relative_errors([1e-12], [0.0])[0] == pytest.approx(1e-4)
    assert relative_errors([2.0], [1.0])[0] == 0.5


def test_checkpoint_round_trip(tmp_path):
    cfg = ModelConfig.for_data(visual_input="windowed", fusion="A", dropout_p=0.1)
    params = init_params(cfg, 3)
    path = tmp_path / "m.npz"
    save_checkpoint(path, params, cfg, {"seed": 3})
    back, cfg2, meta = load_checkpoint(path)
    assert cfg2 == cfg
    assert meta == {"seed": 3}
    assert back.flat.tobytes() == params.flat.tobytes()
    assert not (tmp_path / "m.npz.tmp").exists()


def test_checkpoint_missing(tmp_path):
    with pytest.raises(IngestError):
        load_checkpoint(tmp_path / "none.npz")
