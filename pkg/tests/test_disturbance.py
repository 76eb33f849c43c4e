"""Conditional disturbance models and the decoder weight format."""

import copy
import json
import math

import numpy as np
import pytest

from veloguard import (Command, Disturbance, DisturbanceMoments, GaussianModel,
                       ReplayModel, RomState, StudentTModel, WeightFormatError,
                       WeightShapeError, WeightVersionError, build_model,
                       decoder_infer, load_weights, make_window,
                       moments_by_sampling, push_history, save_weights,
                       serialize_weights, student_t_sample, zero_model)
from veloguard.disturbance import (DEFAULT_MOMENT_SAMPLES, FORMAT_VERSION,
                                   ZERO_MOMENTS, DecoderModel, context_vector,
                                   derive_seed, parse_weights)


def _window(pairs, capacity=4):
    w = make_window(capacity)
    for x, u in pairs:
        w = push_history(w, x, u)
    return w


WIN = _window([(RomState(0.2, -0.3, 1.0), Command(0.1, 0.0, -0.2))])


# moments --------------------------------------------------------------------

def test_moments_arrays_are_read_only():
    m = DisturbanceMoments(mean=np.zeros(3), cov=np.eye(3))
    with pytest.raises(ValueError):
        m.mean[0] = 1.0
    with pytest.raises(ValueError):
        m.cov[0, 0] = 2.0


def test_moments_reject_nonfinite():
    with pytest.raises(ValueError):
        DisturbanceMoments(mean=np.array([0.0, np.nan, 0.0]), cov=np.eye(3))
    with pytest.raises(ValueError):
        DisturbanceMoments(mean=np.zeros(3), cov=np.full((3, 3), np.inf))


def test_moments_symmetry_tolerance():
    c = np.eye(3)
    c[0, 1] += 5e-10
    DisturbanceMoments(mean=np.zeros(3), cov=c)  # inside the 1e-9 band
    c2 = np.eye(3)
    c2[0, 1] += 1e-6
    with pytest.raises(ValueError):
        DisturbanceMoments(mean=np.zeros(3), cov=c2)


def test_moments_reject_indefinite():
    with pytest.raises(ValueError):
        DisturbanceMoments(mean=np.zeros(3), cov=np.diag([1.0, 1.0, -1e-3]))


def test_directional_variance():
    m = DisturbanceMoments(mean=np.zeros(3),
                           cov=np.array([[1.0, 0.5, 0.0],
                                         [0.5, 4.0, 0.0],
                                         [0.0, 0.0, 9.0]]))
    assert abs(m.directional_variance((1.0, 0.0)) - 1.0) < 1e-15
    assert abs(m.directional_variance((0.0, 1.0)) - 4.0) < 1e-15
    assert abs(m.directional_variance((0.6, 0.8)) - 3.4) < 1e-12
    assert ZERO_MOMENTS.directional_variance((1.0, 0.0)) == 0.0


# seeding --------------------------------------------------------------------

def test_derive_seed_deterministic():
    a = np.random.default_rng(derive_seed(3, b"ctx")).integers(2 ** 32)
    b = np.random.default_rng(derive_seed(3, b"ctx")).integers(2 ** 32)
    assert a == b


def test_derive_seed_sensitive_to_parts():
    assert derive_seed(1).entropy != derive_seed(2).entropy
    assert derive_seed(1, b"a").entropy != derive_seed(1, b"b").entropy


# gaussian / zero ------------------------------------------------------------

def test_zero_model_is_exactly_zero():
    m = zero_model()
    rng = np.random.default_rng(0)
    assert m.sample(WIN, rng) == Disturbance(0.0, 0.0, 0.0)
    mom = m.moments(WIN)
    assert np.all(mom.mean == 0.0) and np.all(mom.cov == 0.0)


def test_gaussian_moments_ignore_window():
    m = GaussianModel(mean=[0.1, 0.2, 0.3], cov=np.diag([1.0, 2.0, 3.0]))
    other = _window([(RomState(9.0, 9.0, 0.5), Command(1.0, 1.0, 1.0))])
    assert m.moments(WIN) is m.moments(other)


def test_gaussian_sampling_statistics():
    m = GaussianModel(mean=[0.1, -0.2, 0.05], cov=np.diag([0.04, 0.09, 0.01]))
    rng = np.random.default_rng(12)
    draws = np.array([[d.d_x, d.d_y, d.d_theta]
                      for d in (m.sample(WIN, rng) for _ in range(20000))])
    assert np.max(np.abs(draws.mean(axis=0) - [0.1, -0.2, 0.05])) < 0.01
    assert np.max(np.abs(draws.var(axis=0) - [0.04, 0.09, 0.01])) < 0.01


def test_gaussian_singular_covariance_supported():
    # rank-1 covariance: samples stay on the line d_x = d_y, d_theta = 0
    m = GaussianModel(mean=np.zeros(3),
                      cov=np.array([[1.0, 1.0, 0.0],
                                    [1.0, 1.0, 0.0],
                                    [0.0, 0.0, 0.0]]))
    rng = np.random.default_rng(4)
    for _ in range(100):
        d = m.sample(WIN, rng)
        assert abs(d.d_x - d.d_y) < 1e-12
        assert d.d_theta == 0.0


def test_gaussian_rejects_bad_covariance():
    bad = np.eye(3)
    bad[0, 1] = 0.5  # not symmetric
    with pytest.raises(ValueError):
        GaussianModel(mean=np.zeros(3), cov=bad)
    with pytest.raises(ValueError):
        GaussianModel(mean=np.zeros(3), cov=np.diag([1.0, 1.0, -0.5]))


# student-t ------------------------------------------------------------------

def test_student_t_sample_respects_clip():
    rng = np.random.default_rng(8)
    scale = 0.5 ** 2 * np.eye(3)
    for _ in range(1000):
        d = student_t_sample(1.5, scale, 0.7, rng)
        assert math.hypot(d.d_x, math.hypot(d.d_y, d.d_theta)) <= 0.7 + 1e-12


def test_student_t_sample_validation():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        student_t_sample(0.0, np.eye(3), 1.0, rng)
    with pytest.raises(ValueError):
        student_t_sample(3.0, np.eye(3), 0.0, rng)


def test_student_t_moments_deterministic():
    kwargs = dict(dof=3.0, scale=0.01 * np.eye(3), clip_radius=2.0)
    m1 = StudentTModel(**kwargs)
    m2 = StudentTModel(**kwargs)
    a, b = m1.moments(WIN), m2.moments(WIN)
    assert np.array_equal(a.mean, b.mean)
    assert np.array_equal(a.cov, b.cov)
    # cached on the instance after the first query
    assert m1.moments(WIN) is a


def test_student_t_moments_depend_on_sample_count():
    base = dict(dof=3.0, scale=0.01 * np.eye(3), clip_radius=2.0)
    a = StudentTModel(moment_samples=4096, **base).moments(WIN)
    b = StudentTModel(moment_samples=2048, **base).moments(WIN)
    assert not np.array_equal(a.mean, b.mean)


def test_student_t_moments_near_symmetric():
    m = StudentTModel(dof=3.0, scale=0.01 * np.eye(3), clip_radius=2.0)
    mom = m.moments(WIN)
    assert np.max(np.abs(mom.mean)) < 0.02
    assert np.all(np.diag(mom.cov) > 0.0)


def test_student_t_validation():
    with pytest.raises(ValueError):
        StudentTModel(dof=-1.0, scale=np.eye(3), clip_radius=2.0)
    with pytest.raises(ValueError):
        StudentTModel(dof=3.0, scale=np.eye(3), clip_radius=-0.1)
    with pytest.raises(ValueError):
        StudentTModel(dof=3.0, scale=np.eye(3), clip_radius=2.0, moment_samples=1)


# replay ---------------------------------------------------------------------

def test_replay_moments_match_numpy():
    rows = np.array([[0.1, 0.0, -0.1],
                     [0.0, 0.2, 0.1],
                     [-0.1, -0.2, 0.0],
                     [0.2, 0.1, 0.3]])
    m = ReplayModel(rows)
    mom = m.moments(WIN)
    assert np.allclose(mom.mean, rows.mean(axis=0), atol=1e-15)
    assert np.allclose(mom.cov, np.cov(rows, rowvar=False, ddof=1), atol=1e-15)


def test_replay_samples_are_recorded_rows():
    rows = np.array([[0.1, 0.0, -0.1], [0.0, 0.2, 0.1]])
    m = ReplayModel(rows)
    rng = np.random.default_rng(2)
    seen = set()
    for _ in range(50):
        d = m.sample(WIN, rng)
        tup = (d.d_x, d.d_y, d.d_theta)
        assert tup in {tuple(r) for r in rows}
        seen.add(tup)
    assert len(seen) == 2


def test_replay_shape_validation():
    with pytest.raises(ValueError):
        ReplayModel(np.zeros((1, 3)))
    with pytest.raises(ValueError):
        ReplayModel(np.zeros((5, 2)))
    with pytest.raises(ValueError):
        ReplayModel(np.zeros(6))


# context vector -------------------------------------------------------------

def test_context_vector_layout_and_padding():
    s0, u0 = RomState(1.0, 2.0, 3.0), Command(4.0, 5.0, 6.0)
    s1, u1 = RomState(7.0, 8.0, 9.0), Command(10.0, 11.0, 12.0)
    win = _window([(s0, u0), (s1, u1)])
    got = context_vector(win, 3)
    want = np.array([1, 2, 3, 4, 5, 6,
                     1, 2, 3, 4, 5, 6,
                     7, 8, 9, 10, 11, 12], dtype=float)
    assert np.array_equal(got, want)


def test_context_vector_truncates_to_most_recent():
    s0, u0 = RomState(1.0, 2.0, 3.0), Command(4.0, 5.0, 6.0)
    s1, u1 = RomState(7.0, 8.0, 9.0), Command(10.0, 11.0, 12.0)
    win = _window([(s0, u0), (s1, u1)])
    assert np.array_equal(context_vector(win, 1),
                          np.array([7, 8, 9, 10, 11, 12], dtype=float))


def test_context_vector_empty_window_rejected():
    with pytest.raises(ValueError):
        context_vector(make_window(4), 2)


# weight format --------------------------------------------------------------

def _tiny_doc():
    rng = np.random.default_rng(99)
    w0 = rng.normal(size=(4, 8)).round(6)
    b0 = rng.normal(size=4).round(6)
    w1 = rng.normal(size=(3, 4)).round(6)
    b1 = rng.normal(size=3).round(6)
    return {
        "format_version": FORMAT_VERSION,
        "context_len": 1,
        "latent_dim": 2,
        "input_normalization": {"mean": [0.0] * 6, "scale": [1.0] * 6},
        "output_normalization": {"mean": [0.0, 0.0, 0.0],
                                 "scale": [1.0, 1.0, 1.0]},
        "layers": [
            {"rows": 4, "cols": 8,
             "weights": [float(v) for v in w0.reshape(-1)],
             "bias": [float(v) for v in b0], "activation": "relu"},
            {"rows": 3, "cols": 4,
             "weights": [float(v) for v in w1.reshape(-1)],
             "bias": [float(v) for v in b1], "activation": "linear"},
        ],
    }


def _canonical(doc):
    return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def test_parse_valid_document():
    w = parse_weights(_canonical(_tiny_doc()))
    assert w.context_len == 1
    assert w.latent_dim == 2
    assert len(w.layers) == 2
    assert w.layers[0].weight.shape == (4, 8)
    assert w.layers[1].activation == "linear"


def test_serialize_round_trip_is_byte_identical():
    text = _canonical(_tiny_doc())
    w = parse_weights(text)
    assert serialize_weights(w) == text
    again = parse_weights(serialize_weights(w))
    assert serialize_weights(again) == text


def test_save_and_load(tmp_path):
    w = parse_weights(_canonical(_tiny_doc()))
    path = tmp_path / "weights.json"
    save_weights(w, path)
    assert path.read_text(encoding="utf-8") == serialize_weights(w)
    again = load_weights(path)
    assert serialize_weights(again) == serialize_weights(w)


def test_load_missing_file():
    with pytest.raises(FileNotFoundError):
        load_weights("/nonexistent/weights.json")


def test_version_mismatch():
    doc = _tiny_doc()
    doc["format_version"] = "shield-cvae-2"
    with pytest.raises(WeightVersionError):
        parse_weights(_canonical(doc))


def test_field_set_is_strict():
    doc = _tiny_doc()
    del doc["latent_dim"]
    with pytest.raises(WeightFormatError):
        parse_weights(_canonical(doc))
    doc = _tiny_doc()
    doc["comment"] = "hi"
    with pytest.raises(WeightFormatError):
        parse_weights(_canonical(doc))


def test_weight_count_mismatch():
    doc = _tiny_doc()
    doc["layers"][0]["weights"] = doc["layers"][0]["weights"][:-1]
    with pytest.raises(WeightShapeError):
        parse_weights(_canonical(doc))


def test_layers_must_chain():
    doc = _tiny_doc()
    doc["layers"][1]["cols"] = 5
    doc["layers"][1]["weights"] = [0.0] * 15
    with pytest.raises(WeightShapeError):
        parse_weights(_canonical(doc))


def test_final_layer_must_output_three():
    doc = _tiny_doc()
    doc["layers"][1]["rows"] = 2
    doc["layers"][1]["weights"] = [0.0] * 8
    doc["layers"][1]["bias"] = [0.0, 0.0]
    with pytest.raises(WeightShapeError):
        parse_weights(_canonical(doc))


def test_bad_activation():
    doc = _tiny_doc()
    doc["layers"][0]["activation"] = "tanh"
    with pytest.raises(WeightFormatError):
        parse_weights(_canonical(doc))


def test_nonpositive_scale_rejected():
    doc = _tiny_doc()
    doc["input_normalization"]["scale"][2] = 0.0
    with pytest.raises(WeightFormatError):
        parse_weights(_canonical(doc))


def test_malformed_json_and_types():
    with pytest.raises(WeightFormatError):
        parse_weights("not json {")
    with pytest.raises(WeightFormatError):
        parse_weights("[1, 2, 3]\n")
    doc = _tiny_doc()
    doc["context_len"] = 1.0
    with pytest.raises(WeightFormatError):
        parse_weights(_canonical(doc))
    doc = _tiny_doc()
    doc["layers"][0]["weights"][0] = True
    with pytest.raises(WeightFormatError):
        parse_weights(_canonical(doc))


def test_error_hierarchy():
    assert issubclass(WeightVersionError, WeightFormatError)
    assert issubclass(WeightShapeError, WeightFormatError)
    assert issubclass(WeightFormatError, ValueError)


# decoder inference ----------------------------------------------------------

def _passthrough_weights():
    # single linear layer: out = (z + 0.5, 2 z, p_x), then denormalize
    w = np.zeros((3, 7))
    w[0, 6] = 1.0
    w[1, 6] = 2.0
    w[2, 0] = 1.0
    doc = {
        "format_version": FORMAT_VERSION,
        "context_len": 1,
        "latent_dim": 1,
        "input_normalization": {"mean": [0.0] * 6, "scale": [1.0] * 6},
        "output_normalization": {"mean": [1.0, 2.0, 3.0],
                                 "scale": [2.0, 2.0, 2.0]},
        "layers": [{"rows": 3, "cols": 7,
                    "weights": [float(v) for v in w.reshape(-1)],
                    "bias": [0.5, 0.0, 0.0], "activation": "linear"}],
    }
    return parse_weights(_canonical(doc))


def test_decoder_infer_by_hand():
    w = _passthrough_weights()
    d = decoder_infer(w, WIN, np.array([0.25]))
    assert d.d_x == 2.5          # (0.25 + 0.5) * 2 + 1
    assert d.d_y == 3.0          # (2 * 0.25) * 2 + 2
    assert abs(d.d_theta - 3.4) < 1e-15   # p_x * 2 + 3


def test_decoder_relu_clamps():
    w = np.zeros((3, 7))
    w[0, 6] = -1.0
    doc = {
        "format_version": FORMAT_VERSION,
        "context_len": 1,
        "latent_dim": 1,
        "input_normalization": {"mean": [0.0] * 6, "scale": [1.0] * 6},
        "output_normalization": {"mean": [0.0] * 3, "scale": [1.0] * 3},
        "layers": [{"rows": 3, "cols": 7,
                    "weights": [float(v) for v in w.reshape(-1)],
                    "bias": [0.0] * 3, "activation": "relu"},
                   {"rows": 3, "cols": 3,
                    "weights": [float(v) for v in np.eye(3).reshape(-1)],
                    "bias": [0.0] * 3, "activation": "linear"}],
    }
    parsed = parse_weights(_canonical(doc))
    d = decoder_infer(parsed, WIN, np.array([1.0]))
    assert d.d_x == 0.0


def test_decoder_infer_latent_shape_checked():
    w = _passthrough_weights()
    with pytest.raises(WeightShapeError):
        decoder_infer(w, WIN, np.array([0.1, 0.2]))


def test_decoder_model_moments_deterministic():
    w = parse_weights(_canonical(_tiny_doc()))
    m1 = DecoderModel(w, samples=64, base_seed=5)
    m2 = DecoderModel(w, samples=64, base_seed=5)
    a = m1.moments(WIN)
    assert np.array_equal(a.mean, m1.moments(WIN).mean)
    assert np.array_equal(a.mean, m2.moments(WIN).mean)
    assert np.array_equal(a.cov, m2.moments(WIN).cov)
    b = DecoderModel(w, samples=64, base_seed=6).moments(WIN)
    assert not np.array_equal(a.mean, b.mean)


def test_decoder_model_moments_depend_on_context():
    w = parse_weights(_canonical(_tiny_doc()))
    m = DecoderModel(w, samples=64, base_seed=5)
    other = _window([(RomState(5.0, -1.0, 0.3), Command(0.0, 0.1, 0.0))])
    assert not np.array_equal(m.moments(WIN).mean, m.moments(other).mean)


def test_decoder_model_sample_reproducible():
    w = parse_weights(_canonical(_tiny_doc()))
    m = DecoderModel(w)
    d1 = m.sample(WIN, np.random.default_rng(3))
    d2 = m.sample(WIN, np.random.default_rng(3))
    assert d1 == d2


def test_decoder_model_rejects_tiny_sample_count():
    w = parse_weights(_canonical(_tiny_doc()))
    with pytest.raises(ValueError):
        DecoderModel(w, samples=1)


# moments_by_sampling --------------------------------------------------------

class _ConstModel:
    def sample(self, window, rng):
        rng.standard_normal()  # consume the stream like a real model
        return Disturbance(0.3, -0.2, 0.1)


def test_sampled_moments_of_constant_model():
    mom = moments_by_sampling(_ConstModel(), WIN, 64, derive_seed(1))
    assert np.array_equal(mom.cov, np.zeros((3, 3)))
    assert np.max(np.abs(mom.mean - [0.3, -0.2, 0.1])) < 1e-12


def test_sampled_moments_zero_model_exact():
    mom = moments_by_sampling(zero_model(), WIN, 16, derive_seed(0))
    assert np.array_equal(mom.mean, np.zeros(3))
    assert np.array_equal(mom.cov, np.zeros((3, 3)))


def test_sampled_moments_need_two_draws():
    with pytest.raises(ValueError):
        moments_by_sampling(zero_model(), WIN, 1, derive_seed(0))


# build_model ----------------------------------------------------------------

def test_build_zero():
    m = build_model({"kind": "zero"})
    assert m.sample(WIN, np.random.default_rng(0)) == Disturbance(0.0, 0.0, 0.0)


def test_build_gaussian():
    m = build_model({"kind": "gaussian", "mean": [0.1, 0.0, 0.0],
                     "cov": np.diag([0.01, 0.01, 0.0]).tolist()})
    assert abs(m.moments(WIN).mean[0] - 0.1) < 1e-15


def test_build_student_t_scalar_scale():
    m = build_model({"kind": "student_t", "dof": 3.0, "scale": 0.1,
                     "clip_radius": 2.0})
    assert np.allclose(m.scale, 0.01 * np.eye(3), atol=1e-18)
    assert m.dof == 3.0


def test_build_replay_inline_and_file(tmp_path):
    rows = [[0.1, 0.0, -0.1], [0.0, 0.2, 0.1], [0.05, 0.05, 0.0]]
    inline = build_model({"kind": "replay", "residuals": rows})
    csv = tmp_path / "residuals.csv"
    csv.write_text("\n".join(",".join(repr(v) for v in r) for r in rows) + "\n")
    from_file = build_model({"kind": "replay", "path": str(csv)})
    assert np.array_equal(inline.residuals, from_file.residuals)


def test_build_decoder_from_file(tmp_path):
    path = tmp_path / "weights.json"
    save_weights(parse_weights(_canonical(_tiny_doc())), path)
    m = build_model({"kind": "decoder", "path": str(path), "samples": 32,
                     "seed": 7})
    assert isinstance(m, DecoderModel)
    assert m.samples == 32
    assert m.base_seed == 7
    default = build_model({"kind": "decoder", "path": str(path)})
    assert default.samples == DEFAULT_MOMENT_SAMPLES


def test_build_model_validation():
    with pytest.raises(ValueError):
        build_model({"kind": "warp_drive"})
    with pytest.raises(ValueError):
        build_model({"kind": "zero", "extra": 1})
    with pytest.raises(ValueError):
        build_model({})
    with pytest.raises(ValueError):
        build_model("zero")
