"""Model bundle, loss terms, training loop, and augmentation.

Loss oracles are recomputed with plain numpy in each test; the alignment
posterior is cross-checked against the numpy label-model path; gradients are
validated by finite differences over all touched parameters.
"""
import dataclasses
import json

import numpy as np
import pytest

import wsganlab.autodiff as ad
from wsganlab.autodiff import Tensor, backward, check_gradients_params
from wsganlab.data import DatasetSpec, synth_dataset
from wsganlab.labelmodel import LfSpec, generate_synthetic_lfs, weighted_softmax_posterior
from wsganlab.wsgan import (
    AugmentationRejectedError,
    HISTORY_COLUMNS,
    ModelBundle,
    TrainingConfig,
    TrainingDivergedError,
    TrainingError,
    alignment_loss,
    augment_dataset,
    binary_cross_entropy,
    class_balance_check,
    cross_entropy,
    gan_value,
    generate_samples,
    generator_loss,
    info_loss,
    load_bundle,
    predict_pseudolabels,
    pseudolabel_table,
    save_bundle,
    train,
    weighted_posterior_tensor,
)

CLAMP = 1e-7


def small_config(**kwargs):
    base = dict(
        class_count=3,
        num_lfs=4,
        feature_dim=2,
        z_dim=4,
        hidden_dim=8,
        epochs=2,
        batch_size=8,
        seed=0,
    )
    base.update(kwargs)
    return TrainingConfig(**base)


def small_problem(n=40, seed=5):
    spec = DatasetSpec(class_count=3, feature_dim=2, num_samples=n, radius=3.0, sigma=0.5, seed=seed)
    data = synth_dataset(spec)
    specs = [
        LfSpec(1, 0.8, 0.3, seed=1),
        LfSpec(2, 0.7, 0.25, seed=2),
        LfSpec(3, 0.75, 0.3, seed=3),
        LfSpec(1, 0.6, 0.2, seed=4),
    ]
    L = generate_synthetic_lfs(data.labels, specs, 3)
    return data, L


# ---------------------------------------------------------------------------
# config and bundle


def test_config_validation():
    with pytest.raises(TrainingError):
        small_config(mode="both")
    with pytest.raises(TrainingError):
        small_config(class_count=1)
    with pytest.raises(TrainingError):
        small_config(label_smoothing=0.5)
    with pytest.raises(TrainingError):
        small_config(label_flip_prob=-0.1)
    with pytest.raises(TrainingError):
        small_config(lr_d=0.0)
    with pytest.raises(TrainingError):
        small_config(align_weight=-1.0)
    assert small_config(mode="infogan").effective_align_weight == 0.0
    assert small_config(mode="encoder", align_weight=0.7).effective_align_weight == 0.7


def test_bundle_init_identical_across_modes():
    for mode in ("vector", "infogan"):
        a = ModelBundle(small_config(mode="encoder"), np.random.default_rng(3))
        b = ModelBundle(small_config(mode=mode), np.random.default_rng(3))
        for (name_a, pa), (name_b, pb) in zip(a.named_params(), b.named_params()):
            assert name_a == name_b
            assert (pa.data == pb.data).all()


def test_bundle_head_initialization():
    bundle = ModelBundle(small_config(), np.random.default_rng(0))
    assert np.abs(bundle.weight_head.w.data).max() < 0.05  # near-zero head
    assert (bundle.weight_vector.data == 0.0).all()
    x = Tensor(np.random.default_rng(1).normal(size=(6, 2)))
    feats = bundle.features(x)
    assert np.abs(feats.data).max() < 1.0  # tanh-bounded trunk
    q = bundle.code_posterior(feats).data
    assert np.allclose(q.sum(axis=1), 1.0)
    w = bundle.lf_weights(feats).data
    assert ((w > 0) & (w < 1)).all()
    assert np.abs(w - 0.5).max() < 0.05  # weights open near majority vote


def test_vector_mode_weights_exactly_half_at_init():
    bundle = ModelBundle(small_config(mode="vector"), np.random.default_rng(0))
    assert (bundle.lf_weights().data == 0.5).all()


def test_param_groups_disjoint_roles():
    bundle = ModelBundle(small_config(mode="encoder"), np.random.default_rng(0))
    gen_ids = {id(p) for p in bundle.gen_params()}
    disc_ids = {id(p) for p in bundle.disc_params()}
    assert not gen_ids & disc_ids
    align_ids = {id(p) for p in bundle.align_params()}
    assert {id(p) for p in bundle.trunk.params} <= align_ids & disc_ids


# ---------------------------------------------------------------------------
# loss oracles


def test_gan_value_oracle():
    d_real = np.array([0.9, 0.7])
    d_fake = np.array([0.4, 0.2])
    got = float(gan_value(d_real, d_fake).data)
    want = np.mean(np.log(d_real)) + np.mean(np.log(1 - d_fake))
    assert np.isclose(got, want, atol=1e-12)


def test_generator_loss_oracle_and_clamp():
    d_fake = np.array([0.5, 0.25])
    assert np.isclose(float(generator_loss(d_fake).data), -np.mean(np.log(d_fake)), atol=1e-12)
    extreme = float(generator_loss(np.array([0.0])).data)
    assert np.isclose(extreme, -np.log(CLAMP))  # clamp keeps it finite


def test_binary_cross_entropy_oracle():
    p = np.array([0.8, 0.3, 0.6])
    t = np.array([1.0, 0.0, 0.9])
    got = float(binary_cross_entropy(p, t).data)
    want = -np.mean(t * np.log(p) + (1 - t) * np.log(1 - p))
    assert np.isclose(got, want, atol=1e-12)


def test_info_loss_is_code_cross_entropy():
    probs = np.array([[0.7, 0.2, 0.1], [0.1, 0.8, 0.1]])
    onehot = np.eye(3)[[0, 1]]
    got = float(info_loss(onehot, probs).data)
    assert np.isclose(got, -np.mean([np.log(0.7), np.log(0.8)]), atol=1e-12)


def test_cross_entropy_soft_targets():
    pred = np.array([[0.6, 0.4]])
    target = np.array([[0.5, 0.5]])
    got = float(cross_entropy(pred, target).data)
    assert np.isclose(got, -(0.5 * np.log(0.6) + 0.5 * np.log(0.4)), atol=1e-12)


@pytest.mark.parametrize("per_row", [False, True])
def test_weighted_posterior_tensor_matches_numpy_path(per_row):
    rng = np.random.default_rng(6)
    votes = rng.integers(0, 4, size=(7, 5))
    w = rng.uniform(0.1, 0.9, size=(7, 5) if per_row else 5)
    got = weighted_posterior_tensor(votes, Tensor(w), 3).data
    want = weighted_softmax_posterior(votes, w, 3)
    assert np.allclose(got, want, atol=1e-12)


# ---------------------------------------------------------------------------
# alignment


def covered_batch(n=12):
    data, L = small_problem(n=60)
    mask = (L.votes != 0).any(axis=1)
    x = data.features[mask][:n]
    votes = L.votes[mask][:n]
    return x, votes


def test_alignment_penalty_formula():
    x, votes = covered_batch()
    bundle = ModelBundle(small_config(mode="encoder"), np.random.default_rng(2))
    _loss, parts = alignment_loss(bundle, x, votes, epoch=0)
    with ad.no_grad():
        theta = bundle.lf_weights(bundle.features(Tensor(x))).data
    want0 = 3 / (0 * 1.5 + 1.0) * ((theta - 0.5) ** 2).sum(axis=1).mean()
    assert np.isclose(parts["penalty"], want0, atol=1e-12)
    _loss, parts3 = alignment_loss(bundle, x, votes, epoch=3)
    assert np.isclose(parts3["penalty_multiplier"], 3 / (3 * 1.5 + 1.0), atol=1e-15)


def test_alignment_vector_penalty_is_plain_sum():
    x, votes = covered_batch()
    bundle = ModelBundle(small_config(mode="vector"), np.random.default_rng(2))
    _loss, parts = alignment_loss(bundle, x, votes, epoch=0)
    assert parts["penalty"] == 0.0  # sigmoid(0) = 0.5 exactly
    bundle.weight_vector.data[:] = 1.0
    _loss, parts = alignment_loss(bundle, x, votes, epoch=0)
    theta = 1 / (1 + np.exp(-1.0))
    assert np.isclose(parts["penalty"], 3.0 * 4 * (theta - 0.5) ** 2, atol=1e-12)


def test_alignment_ce_parts_against_numpy():
    x, votes = covered_batch()
    bundle = ModelBundle(small_config(mode="encoder"), np.random.default_rng(4))
    loss, parts = alignment_loss(bundle, x, votes, epoch=1)
    with ad.no_grad():
        feats = bundle.features(Tensor(x))
        q = bundle.code_posterior(feats).data
        theta = bundle.lf_weights(feats).data
        y_hat = weighted_softmax_posterior(votes, theta, 3)
        f1 = bundle.label_posterior_from_code(Tensor(q)).data
        f2 = bundle.code_posterior_from_label(Tensor(y_hat)).data
    ce1 = -np.mean((y_hat * np.log(np.clip(f1, CLAMP, None))).sum(axis=1))
    ce2 = -np.mean((q * np.log(np.clip(f2, CLAMP, None))).sum(axis=1))
    assert np.isclose(parts["ce_code_side"], ce1, atol=1e-10)
    assert np.isclose(parts["ce_label_side"], ce2, atol=1e-10)
    assert np.isclose(float(loss.data), ce1 + ce2 + parts["penalty"], atol=1e-10)


def test_alignment_rejects_uncovered_rows():
    x, votes = covered_batch()
    votes = votes.copy()
    votes[0] = 0
    bundle = ModelBundle(small_config(), np.random.default_rng(0))
    with pytest.raises(TrainingError):
        alignment_loss(bundle, x, votes, epoch=0)


def test_theta_path_does_not_touch_trunk():
    # gradient through the weight head flows into detached features only
    x, votes = covered_batch()
    bundle = ModelBundle(small_config(mode="encoder"), np.random.default_rng(7))
    feats = bundle.features(Tensor(x))
    q = bundle.code_posterior(feats)
    theta = ad.sigmoid(bundle.weight_head(ad.detach(feats)))
    y_hat = weighted_posterior_tensor(votes, theta, 3)
    label_side = cross_entropy(bundle.code_posterior_from_label(y_hat), ad.detach(q))
    dev = ad.sub(theta, 0.5)
    pen = ad.scale(ad.total(ad.mul(dev, dev)), 1.0 / x.shape[0])
    backward(ad.add(label_side, pen))
    for p in bundle.trunk.params:
        assert p.grad is None or not p.grad.any()
    assert bundle.weight_head.w.grad is not None and bundle.weight_head.w.grad.any()
    for p in bundle.trunk.params:
        p.zero_grad()
    loss, _ = alignment_loss(bundle, x, votes, epoch=0)
    backward(loss)
    assert any(p.grad is not None and p.grad.any() for p in bundle.trunk.params)  # code side does


@pytest.mark.parametrize("mode", ["encoder", "vector"])
def test_alignment_gradients_match_finite_differences(mode):
    # The live loss contains stop-gradients, so a naive FD probe would move
    # the frozen branches too.  Freeze them as constants, FD-check that
    # functional, then confirm its analytic gradient equals the live one.
    x, votes = covered_batch(n=6)
    n = x.shape[0]
    bundle = ModelBundle(small_config(mode=mode), np.random.default_rng(11))
    params = bundle.align_params()
    with ad.no_grad():
        feats0 = bundle.features(Tensor(x)).data
        q0 = bundle.code_posterior(Tensor(feats0)).data
        if mode == "vector":
            theta0 = 1 / (1 + np.exp(-bundle.weight_vector.data))
        else:
            theta0 = 1 / (1 + np.exp(-bundle.weight_head(Tensor(feats0)).data))
        y0 = weighted_softmax_posterior(votes, theta0, 3)

    def frozen_loss():
        feats = bundle.features(Tensor(x))
        q = bundle.code_posterior(feats)
        if mode == "vector":
            theta, per_row = ad.sigmoid(bundle.weight_vector), 1
        else:
            theta, per_row = ad.sigmoid(bundle.weight_head(Tensor(feats0))), n
        y_hat = weighted_posterior_tensor(votes, theta, 3)
        ce1 = cross_entropy(bundle.label_posterior_from_code(q), Tensor(y0))
        ce2 = cross_entropy(bundle.code_posterior_from_label(y_hat), Tensor(q0))
        dev = ad.sub(theta, 0.5)
        pen = ad.scale(ad.total(ad.mul(dev, dev)), (3 / (1 * 1.5 + 1.0)) / per_row)
        return ad.add(ad.add(ce1, ce2), pen)

    report = check_gradients_params(frozen_loss, params, step=1e-6)
    assert report.ok(1e-4), report.max_rel_error

    for p in params:
        p.zero_grad()
    backward(alignment_loss(bundle, x, votes, epoch=1)[0])
    live = np.concatenate([np.zeros(p.data.size) if p.grad is None else p.grad.ravel() for p in params])
    assert np.allclose(live, report.analytic, atol=1e-12)


def test_discriminator_generator_gradients_match_finite_differences():
    data, _ = small_problem(n=8)
    config = small_config()
    bundle = ModelBundle(config, np.random.default_rng(9))
    x = data.features[:4]
    rng = np.random.default_rng(1)
    z = rng.standard_normal((4, config.z_dim))
    codes = rng.integers(1, 4, size=4)
    targets_real = np.full(4, 0.9)
    targets_fake = np.full(4, 0.1)

    def d_loss():
        with ad.no_grad():
            fake = bundle.generate(z, codes).data
        real_p = bundle.discriminate(bundle.features(Tensor(x)))
        fake_p = bundle.discriminate(bundle.features(Tensor(fake)))
        return ad.add(binary_cross_entropy(real_p, targets_real), binary_cross_entropy(fake_p, targets_fake))

    report = check_gradients_params(d_loss, bundle.disc_params(), step=1e-6)
    assert report.ok(1e-4), report.max_rel_error

    def g_loss():
        return generator_loss(bundle.discriminate(bundle.features(bundle.generate(z, codes))))

    report = check_gradients_params(g_loss, bundle.gen_params(), step=1e-6)
    assert report.ok(1e-4), report.max_rel_error


# ---------------------------------------------------------------------------
# training loop


def test_train_smoke_and_history_schema():
    data, L = small_problem()
    bundle, history = train(data, L, small_config(mode="encoder"))
    assert len(history.records) == 2
    for rec in history.records:
        assert len(rec) == len(HISTORY_COLUMNS)
        assert all(np.isfinite(v) for v in rec)
    assert history.column("epoch") == [0, 1]


def test_train_zero_epochs():
    data, L = small_problem()
    bundle, history = train(data, L, small_config(epochs=0))
    assert history.records == []


def test_train_deterministic():
    data, L = small_problem()
    cfg = small_config(mode="vector", seed=3)
    b1, h1 = train(data, L, cfg)
    b2, h2 = train(data, L, cfg)
    assert h1.records == h2.records
    for (_, p1), (_, p2) in zip(b1.named_params(), b2.named_params()):
        assert (p1.data == p2.data).all()


def test_train_infogan_alignment_columns_zero():
    data, L = small_problem()
    _, history = train(data, L, small_config(mode="infogan"))
    assert all(v == 0.0 for v in history.column("align_loss"))
    assert all(v == 0.0 for v in history.column("penalty"))


def test_encoder_zero_align_weight_reproduces_infogan_bitwise():
    data, L = small_problem(n=50)
    cfg_e = small_config(mode="encoder", align_weight=0.0, seed=13, epochs=3)
    cfg_i = small_config(mode="infogan", seed=13, epochs=3)
    be, he = train(data, L, cfg_e)
    bi, hi = train(data, L, cfg_i)
    for col in ("d_loss", "g_loss", "info_loss"):
        assert he.column(col) == hi.column(col)
    for (_, pe), (_, pi) in zip(be.named_params(), bi.named_params()):
        assert (pe.data == pi.data).all()


def test_train_input_validation():
    data, L = small_problem()
    with pytest.raises(TrainingError):
        train(data, L.votes[:10], small_config())  # row mismatch
    bad = dataclasses.replace(data, features=np.full_like(data.features, np.nan))
    with pytest.raises(TrainingError):
        train(bad, L, small_config())
    empty = L.votes.copy()
    empty[:] = 0
    with pytest.raises(TrainingError):
        train(data, empty, small_config(mode="encoder"))


def test_history_csv_format(tmp_path):
    data, L = small_problem()
    _, history = train(data, L, small_config())
    path = history.save_csv(tmp_path / "h.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(HISTORY_COLUMNS)
    assert len(lines) == 3
    cells = lines[1].split(",")
    assert cells[0] == "0"
    float(cells[1])  # parses


def test_diverged_error_names_term_and_epoch():
    err = TrainingDivergedError("d_loss", 4, float("nan"))
    assert "d_loss" in str(err) and "4" in str(err)


# ---------------------------------------------------------------------------
# prediction and generation


def test_predict_routes_lf_vs_synthetic():
    data, L = small_problem()
    bundle, _ = train(data, L, small_config())
    covered = np.flatnonzero((L.votes != 0).any(axis=1))[0]
    probs, tag = predict_pseudolabels(bundle, data.features[covered], L.votes[covered])
    assert tag == "lf"
    with ad.no_grad():
        if bundle.config.mode == "vector":
            w = 1 / (1 + np.exp(-bundle.weight_vector.data))
        else:
            w = bundle.lf_weights(bundle.features(Tensor(data.features[covered : covered + 1]))).data[0]
    want = weighted_softmax_posterior(L.votes[covered], w, 3)
    assert np.allclose(probs, want, atol=1e-12)
    probs2, tag2 = predict_pseudolabels(bundle, data.features[0], np.zeros(4, dtype=int))
    assert tag2 == "synthetic"
    assert np.isclose(probs2.sum(), 1.0)


def test_pseudolabel_table_partitions_by_coverage():
    data, L = small_problem()
    bundle, _ = train(data, L, small_config())
    table, tags = pseudolabel_table(bundle, data.features, L)
    covered = (L.votes != 0).any(axis=1)
    assert (table.covered == covered).all()
    assert all(t == ("lf" if c else "synthetic") for t, c in zip(tags, covered))
    assert np.allclose(table.probs.sum(axis=1), 1.0)
    # batch path agrees with the single-row path
    i = int(np.flatnonzero(covered)[3])
    single, _ = predict_pseudolabels(bundle, data.features[i], L.votes[i])
    assert np.allclose(table.probs[i], single, atol=1e-12)


def test_generate_samples_deterministic_and_fixed_class():
    bundle = ModelBundle(small_config(), np.random.default_rng(0))
    xa, ca = generate_samples(bundle, 20, seed=5)
    xb, cb = generate_samples(bundle, 20, seed=5)
    assert (xa == xb).all() and (ca == cb).all()
    xc, cc = generate_samples(bundle, 20, seed=6)
    assert (xa != xc).any()
    xf, cf = generate_samples(bundle, 10, seed=5, class_id=2)
    assert (cf == 2).all()
    x0, c0 = generate_samples(bundle, 0)
    assert x0.shape == (0, 2) and c0.shape == (0,)
    with pytest.raises(TrainingError):
        generate_samples(bundle, 5, class_id=9)


# ---------------------------------------------------------------------------
# balance and augmentation


def test_class_balance_check():
    ok = class_balance_check(np.array([1, 1, 2, 2, 3, 3]), 3)
    assert ok.passed and ok.ratio == 1.0
    skew = class_balance_check(np.array([1] * 50 + [2] * 8 + [3] * 2), 3, tolerance=5.0)
    assert not skew.passed and skew.ratio > 5.0
    missing = class_balance_check(np.array([1, 1, 2, 2]), 3)
    assert not missing.passed and missing.missing == [3]
    with pytest.raises(TrainingError):
        class_balance_check(np.array([1, 2]), 3)


def test_augment_appends_and_reports_balance():
    data, L = small_problem(n=80)
    bundle, _ = train(data, L, small_config(epochs=1))
    base_y = data.labels
    result = augment_dataset(bundle, data.features, base_y, 0, "synthetic_pl")
    assert result.appended == 0 and result.balance is None
    assert result.features.shape == data.features.shape


def test_augment_rejects_collapsed_labels():
    bundle = ModelBundle(small_config(), np.random.default_rng(0))
    bundle.code_to_label.b.data[:] = np.array([50.0, 0.0, 0.0])  # force class 1 always
    x = np.zeros((10, 2))
    y = np.array([1, 2, 3] * 3 + [1])
    with pytest.raises(AugmentationRejectedError) as exc:
        augment_dataset(bundle, x, y, 30, "synthetic_pl", seed=0)
    assert exc.value.report.missing  # classes absent entirely


def test_augment_lf_pl_uses_applicator():
    data, L = small_problem(n=80)
    bundle, _ = train(data, L, small_config(epochs=1))
    calls = {}

    def applicator(features, rng):
        calls["n"] = features.shape[0]
        votes = np.zeros((features.shape[0], 4), dtype=int)
        votes[:, 0] = rng.integers(1, 4, size=features.shape[0])
        return votes

    result = augment_dataset(bundle, data.features, data.labels, 24, "lf_pl", lf_applicator=applicator, seed=1)
    assert calls["n"] == 24
    assert result.features.shape[0] == 80 + 24
    with pytest.raises(TrainingError):
        augment_dataset(bundle, data.features, data.labels, 5, "lf_pl")  # applicator missing
    with pytest.raises(TrainingError):
        augment_dataset(bundle, data.features, data.labels, 5, "nope")


def test_augment_bad_applicator_shape():
    data, L = small_problem(n=30)
    bundle = ModelBundle(small_config(), np.random.default_rng(0))
    with pytest.raises(TrainingError):
        augment_dataset(
            bundle, data.features, data.labels, 5, "lf_pl", lf_applicator=lambda f, r: np.zeros((3, 2), int)
        )


# ---------------------------------------------------------------------------
# checkpointing


def test_bundle_roundtrip_bitwise(tmp_path):
    data, L = small_problem()
    bundle, _ = train(data, L, small_config(mode="encoder"))
    path = save_bundle(bundle, tmp_path / "ckpt.json", rng_state={"note": 1})
    loaded, state = load_bundle(path)
    assert state == {"note": 1}
    assert loaded.config == bundle.config
    for (na, pa), (nb, pb) in zip(bundle.named_params(), loaded.named_params()):
        assert na == nb and (pa.data == pb.data).all()
    # predictions are reproduced exactly
    t1, _ = pseudolabel_table(bundle, data.features, L)
    t2, _ = pseudolabel_table(loaded, data.features, L)
    assert (t1.probs == t2.probs).all()


def test_load_rejects_bad_version_and_shape(tmp_path):
    bundle = ModelBundle(small_config(), np.random.default_rng(0))
    path = save_bundle(bundle, tmp_path / "c.json")
    with open(path) as fh:
        payload = json.load(fh)
    payload["format_version"] = 99
    with open(path, "w") as fh:
        json.dump(payload, fh)
    with pytest.raises(TrainingError):
        load_bundle(path)
    payload["format_version"] = 1
    payload["params"]["weight_vector"] = [0.0, 0.0]  # wrong length
    with open(path, "w") as fh:
        json.dump(payload, fh)
    with pytest.raises(TrainingError):
        load_bundle(path)
