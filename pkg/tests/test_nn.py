import numpy as np
import pytest
import torch

from shapeservo.datagen import MPSample, TrainingSample
from shapeservo.errors import ConfigurationError, InvalidCandidateError
from shapeservo.geometry import (
    RigidTransform,
    axis_angle_matrix,
    geodesic_distance,
    random_rotation,
    rot6d_encode,
)
from shapeservo.nn import (
    CandidateClassifierNet,
    DensePredictorNet,
    FeatureExtractor,
    MPConfig,
    PolicyConfig,
    PolicyNet,
    PyramidBatch,
    build_pyramid,
    classify_candidate,
    dense_predict,
    infer_action,
    learning_rate,
    load_mp_model,
    load_policy,
    policy_loss,
    rot6d_to_matrix,
    save_mp_model,
    save_policy,
    select_by_classifier,
    train_classifier,
    train_dense_predictor,
    train_policy,
)
from shapeservo.nn.manip_point import UniformRandomSelector


def rand_cloud(rng, n=64):
    return rng.uniform(-0.05, 0.05, size=(n, 3))


def make_samples(rng, count, arms=1, n=64, translation_scale=0.02):
    samples = []
    for _ in range(count):
        xyz = rand_cloud(rng, n)
        mask = np.zeros((arms, n))
        for a in range(arms):
            mask[a, rng.choice(n, size=8, replace=False)] = 1.0
        current = np.concatenate([xyz.T, mask], axis=0)
        goal = rand_cloud(rng, n).T
        target = []
        for _ in range(arms):
            rot = axis_angle_matrix(rng.normal(size=3), rng.uniform(0, 0.8))
            target.append(np.concatenate([rng.normal(scale=translation_scale, size=3), rot6d_encode(rot)]))
        samples.append(TrainingSample(current, goal, np.stack(target)))
    return samples


# ---------------------------------------------------------------- encoder


def test_stage_output_shapes_paper_dimensions():
    # 1024-point input must produce 64x512, 128x256, then a 256-vector
    rng = np.random.default_rng(0)
    pyr = PyramidBatch([build_pyramid(rand_cloud(rng, 1024))])
    enc = FeatureExtractor(3)
    feats = torch.as_tensor(pyr.xyz[0], dtype=torch.float32)
    out, (f1, f2) = enc(feats, pyr, return_stages=True)
    assert f1.shape == (1, 512, 64)
    assert f2.shape == (1, 256, 128)
    assert out.shape == (1, 256)


def test_encoder_permutation_invariance():
    # neighborhood-preserving relabeling: the FPS seed (index 0) stays put, so
    # the rebuilt hierarchy selects the same point sets and the aggregation is
    # a set function up to accumulation-order noise
    rng = np.random.default_rng(1)
    torch.manual_seed(0)
    xyz = rand_cloud(rng, 64)
    enc = FeatureExtractor(3).double()
    perm = np.concatenate([[0], 1 + rng.permutation(63)])

    def embed(points):
        pyr = PyramidBatch([build_pyramid(points)], dtype=torch.float64)
        feats = torch.as_tensor(points[None], dtype=torch.float64)
        with torch.no_grad():
            return enc(feats, pyr).numpy()

    base = embed(xyz)
    permuted = embed(xyz[perm])
    assert np.abs(base - permuted).max() < 1e-5


def test_encoder_distinguishes_clouds():
    rng = np.random.default_rng(2)
    torch.manual_seed(0)
    enc = FeatureExtractor(3)
    out = []
    for _ in range(2):
        xyz = rand_cloud(rng, 64)
        pyr = PyramidBatch([build_pyramid(xyz)])
        with torch.no_grad():
            out.append(enc(torch.as_tensor(xyz[None], dtype=torch.float32), pyr).numpy())
    assert np.abs(out[0] - out[1]).max() > 1e-6


# ---------------------------------------------------------------- loss


def test_loss_zero_at_target():
    cfg = PolicyConfig(arms=1, n_points=64)
    target = torch.zeros(1, 1, 9)
    target[0, 0, 3:] = torch.as_tensor(rot6d_encode(np.eye(3)))
    raw = torch.cat([target[0, 0, :3], target[0, 0, 3:]]).unsqueeze(0)
    assert float(policy_loss(raw, target, cfg)) == 0.0


def test_loss_translation_analytic():
    cfg = PolicyConfig(arms=1, n_points=64)
    target = torch.zeros(1, 1, 9)
    target[0, 0, 3:] = torch.as_tensor(rot6d_encode(np.eye(3)))
    raw = target.reshape(1, 9).clone()
    raw[0, 0] += 0.1
    assert float(policy_loss(raw, target, cfg)) == pytest.approx(0.01 / 3.0, rel=1e-6)


def test_loss_rotation_analytic_90deg():
    cfg = PolicyConfig(arms=1, n_points=64)
    target = torch.zeros(1, 1, 9)
    target[0, 0, 3:] = torch.as_tensor(rot6d_encode(np.eye(3)))
    r90 = axis_angle_matrix([0, 0, 1], np.pi / 2)
    raw = torch.zeros(1, 9)
    raw[0, 3:] = torch.as_tensor(rot6d_encode(r90))
    assert float(policy_loss(raw, target, cfg)) == pytest.approx(np.pi / 2, rel=1e-6)


def test_rot6d_torch_matches_numpy():
    rng = np.random.default_rng(3)
    for _ in range(20):
        r = random_rotation(rng)
        six = rot6d_encode(r)
        back = rot6d_to_matrix(torch.as_tensor(six)).numpy()
        assert np.abs(back - r).max() < 1e-12


def test_learning_rate_schedule():
    assert learning_rate(0) == 1e-3
    assert learning_rate(49) == 1e-3
    assert learning_rate(50) == pytest.approx(1e-4)
    assert learning_rate(100) == pytest.approx(1e-5)


# ---------------------------------------------------------------- training


def test_train_deterministic_same_seed():
    rng = np.random.default_rng(4)
    samples = make_samples(rng, 12, n=32)
    cfg = PolicyConfig(arms=1, n_points=32)
    r1 = train_policy(samples, cfg, epochs=2, batch_size=6, rng_seed=9)
    r2 = train_policy(samples, cfg, epochs=2, batch_size=6, rng_seed=9)
    assert r1.loss_curve == r2.loss_curve
    assert abs(r1.loss_curve[-1] - r2.loss_curve[-1]) < 1e-12


def test_infer_action_decodes_valid_rotations():
    rng = np.random.default_rng(5)
    samples = make_samples(rng, 8, arms=2, n=32)
    cfg = PolicyConfig(arms=2, n_points=32)
    result = train_policy(samples, cfg, epochs=1, batch_size=4, rng_seed=0)
    actions = infer_action(result.model, samples[0].current, samples[0].goal)
    assert len(actions) == 2
    for a in actions:
        r = a.rotation
        assert np.linalg.norm(r.T @ r - np.eye(3)) < 1e-5
        assert np.linalg.det(r) > 0
    again = infer_action(result.model, samples[0].current, samples[0].goal)
    for a, b in zip(actions, again):
        assert np.array_equal(a.translation, b.translation)
        assert np.array_equal(a.rotation, b.rotation)


def test_translation_only_variant():
    rng = np.random.default_rng(6)
    samples = make_samples(rng, 8, n=32)
    cfg = PolicyConfig(arms=1, n_points=32, translation_only=True)
    result = train_policy(samples, cfg, epochs=1, batch_size=4, rng_seed=0)
    assert result.model.config.output_dim == 3
    actions = infer_action(result.model, samples[0].current, samples[0].goal)
    assert np.array_equal(actions[0].rotation, np.eye(3))


def test_no_mask_variant_ignores_mask_rows():
    rng = np.random.default_rng(7)
    samples = make_samples(rng, 8, n=32)
    cfg = PolicyConfig(arms=1, n_points=32, with_masks=False)
    result = train_policy(samples, cfg, epochs=1, batch_size=4, rng_seed=0)
    a = infer_action(result.model, samples[0].current, samples[0].goal)
    flipped = samples[0].current.copy()
    flipped[3] = 1.0 - flipped[3]  # masks must not matter
    b = infer_action(result.model, flipped, samples[0].goal)
    assert np.array_equal(a[0].translation, b[0].translation)


def test_shape_mismatch_raises():
    rng = np.random.default_rng(8)
    samples = make_samples(rng, 4, n=32)
    cfg = PolicyConfig(arms=1, n_points=32)
    result = train_policy(samples, cfg, epochs=1, batch_size=4, rng_seed=0)
    with pytest.raises(ConfigurationError):
        infer_action(result.model, samples[0].current[:, :16], samples[0].goal[:, :16])


def test_gradients_match_finite_differences():
    # f64 end-to-end; central differences on 10 sampled parameters
    rng = np.random.default_rng(9)
    samples = make_samples(rng, 4, n=32)
    cfg = PolicyConfig(arms=1, n_points=32)
    torch.manual_seed(1)
    model = PolicyNet(cfg).double()
    cur = torch.as_tensor(np.stack([s.current.T for s in samples]), dtype=torch.float64)
    goal = torch.as_tensor(np.stack([s.goal.T for s in samples]), dtype=torch.float64)
    target = torch.as_tensor(np.stack([s.target for s in samples]), dtype=torch.float64)
    pyr_c = PyramidBatch([build_pyramid(s.current[:3].T) for s in samples], dtype=torch.float64)
    pyr_g = PyramidBatch([build_pyramid(s.goal[:3].T) for s in samples], dtype=torch.float64)

    def loss_fn():
        return policy_loss(model(cur, pyr_c, goal, pyr_g), target, cfg)

    loss = loss_fn()
    model.zero_grad()
    loss.backward()
    params = [p for p in model.parameters() if p.grad is not None]
    picker = np.random.default_rng(3)
    checked = 0
    while checked < 10:
        p = params[picker.integers(len(params))]
        flat = p.detach().reshape(-1)
        j = int(picker.integers(flat.numel()))
        analytic = float(p.grad.reshape(-1)[j])
        if abs(analytic) < 1e-8:
            continue
        h = max(1e-7, 1e-6 * abs(float(flat[j])))
        with torch.no_grad():
            orig = float(flat[j])
            p.reshape(-1)[j] = orig + h
            up = float(loss_fn())
            p.reshape(-1)[j] = orig - h
            down = float(loss_fn())
            p.reshape(-1)[j] = orig
        numeric = (up - down) / (2 * h)
        assert numeric == pytest.approx(analytic, rel=1e-3, abs=1e-10)
        checked += 1


# ---------------------------------------------------------------- checkpoints


def test_policy_checkpoint_roundtrip(tmp_path):
    rng = np.random.default_rng(10)
    samples = make_samples(rng, 6, n=32)
    cfg = PolicyConfig(arms=1, n_points=32)
    result = train_policy(samples, cfg, epochs=1, batch_size=3, rng_seed=2)
    path = tmp_path / "policy.dnpm"
    save_policy(path, result.model, {"epochs": 1, "seed": 2})
    back, meta = load_policy(path)
    assert meta["epochs"] == 1
    a = infer_action(result.model, samples[0].current, samples[0].goal)
    b = infer_action(back, samples[0].current, samples[0].goal)
    assert np.allclose(a[0].translation, b[0].translation, atol=1e-7)


def test_checkpoint_magic_mismatch(tmp_path):
    rng = np.random.default_rng(11)
    samples = make_samples(rng, 4, n=32)
    result = train_policy(samples, PolicyConfig(arms=1, n_points=32), epochs=1, batch_size=4, rng_seed=0)
    path = tmp_path / "model.bin"
    save_policy(path, result.model)
    with pytest.raises(ConfigurationError):
        load_mp_model(path)


# ---------------------------------------------------------------- dense / classifier


def mp_samples(rng, count, arms=1, n=32):
    out = []
    for _ in range(count):
        cur = rand_cloud(rng, n).T
        goal = rand_cloud(rng, n).T
        out.append(
            MPSample(cur, goal, label_index=np.array([rng.integers(n) for _ in range(arms)]))
        )
    return out


def test_dense_predictor_output_distribution():
    rng = np.random.default_rng(12)
    samples = mp_samples(rng, 6, arms=2)
    cfg = MPConfig(arms=2, n_points=32)
    model, curve = train_dense_predictor(samples, cfg, epochs=1, batch_size=3, rng_seed=0)
    sel = dense_predict(model, samples[0].current, samples[0].goal)
    assert sel.likelihoods.shape == (2, 32)
    assert np.allclose(sel.likelihoods.sum(axis=1), 1.0, atol=1e-5)
    for arm in range(2):
        assert np.allclose(sel.points[arm], samples[0].current[:3].T[sel.likelihoods[arm].argmax()])
    again = dense_predict(model, samples[0].current, samples[0].goal)
    assert np.array_equal(sel.points, again.points)


def test_dense_loss_at_uniform_init_near_log_p():
    # an untrained fuse layer zeroed out gives exactly uniform softmax
    rng = np.random.default_rng(13)
    samples = mp_samples(rng, 8, arms=1, n=1024 // 16)  # 64 points
    cfg = MPConfig(arms=1, n_points=64)
    torch.manual_seed(0)
    model = DensePredictorNet(cfg)
    with torch.no_grad():
        model.fuse[-1].weight.zero_()
        model.fuse[-1].bias.zero_()
    import torch.nn.functional as F

    cur = torch.as_tensor(np.stack([s.current[:3].T for s in samples]), dtype=torch.float32)
    goal = torch.as_tensor(np.stack([s.goal[:3].T for s in samples]), dtype=torch.float32)
    pyr_c = PyramidBatch([build_pyramid(s.current[:3].T, True) for s in samples])
    pyr_g = PyramidBatch([build_pyramid(s.goal[:3].T, True) for s in samples])
    labels = torch.as_tensor(np.stack([s.label_index for s in samples]), dtype=torch.long)
    with torch.no_grad():
        logits = model(cur, pyr_c, goal, pyr_g)
        loss = F.cross_entropy(logits[:, 0, :], labels[:, 0])
    assert float(loss) == pytest.approx(np.log(64), rel=1e-5)


def test_classifier_output_range_and_validation():
    rng = np.random.default_rng(14)
    cur = rand_cloud(rng, 32).T
    goal = rand_cloud(rng, 32).T
    samples = [
        MPSample(cur, goal, candidate=cur[:, int(rng.integers(32))], label=float(rng.integers(2)))
        for _ in range(8)
    ]
    cfg = MPConfig(arms=1, n_points=32)
    model, curve = train_classifier(samples, cfg, epochs=1, batch_size=4, rng_seed=0)
    lik = classify_candidate(model, cur, goal, cur[:, 5])
    assert 0.0 < lik < 1.0
    assert classify_candidate(model, cur, goal, cur[:, 5]) == lik
    with pytest.raises(InvalidCandidateError):
        classify_candidate(model, cur, goal, np.array([10.0, 0.0, 0.0]))


def test_classifier_loss_at_zero_logits_is_ln2():
    rng = np.random.default_rng(15)
    cur = rand_cloud(rng, 32).T
    goal = rand_cloud(rng, 32).T
    import torch.nn.functional as F

    logits = torch.zeros(16)
    labels = torch.as_tensor(np.array([1.0] * 8 + [0.0] * 8), dtype=torch.float32)
    assert float(F.binary_cross_entropy_with_logits(logits, labels)) == pytest.approx(np.log(2), rel=1e-6)


def test_select_by_classifier_argmax_and_single_candidate():
    rng = np.random.default_rng(16)
    cur = rand_cloud(rng, 32).T
    goal = rand_cloud(rng, 32).T
    samples = [
        MPSample(cur, goal, candidate=cur[:, int(rng.integers(32))], label=float(rng.integers(2)))
        for _ in range(6)
    ]
    cfg = MPConfig(arms=1, n_points=32)
    model, _ = train_classifier(samples, cfg, epochs=1, batch_size=3, rng_seed=1)
    one = select_by_classifier(model, cur, goal, n_candidates=1, rng_seed=0)
    assert one.points.shape == (1, 3)
    assert np.allclose(one.points[0], one.candidates[0])
    many = select_by_classifier(model, cur, goal, n_candidates=8, rng_seed=0)
    best = many.likelihoods[0].max()
    chosen_score = classify_candidate(model, cur, goal, many.points[0])
    assert chosen_score == pytest.approx(best, abs=1e-6)


def test_uniform_random_selector_separation():
    from shapeservo.geometry import PointCloud

    rng = np.random.default_rng(17)
    cloud = PointCloud(rand_cloud(rng, 64))
    sel = UniformRandomSelector(arms=2, rng_seed=0, min_separation=0.04)
    pts = sel.select(cloud, cloud)
    assert pts.shape == (2, 3)
    assert np.linalg.norm(pts[0] - pts[1]) >= 0.04
