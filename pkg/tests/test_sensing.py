import numpy as np
import pytest

from csicrypt.crypto import KeyPhi, hash_key, sample_psi
from csicrypt.errors import (ContractViolationError, InvalidArgumentError,
                             UninitializedModelError)
from csicrypt.sensing import (ClassifierConfig, ClassifierR, FeatureConfig, FeaturePipeline,
                              LinearToy, Resampler, SubmodelConfig, SubmodelDataset, SubmodelF,
                              SubmodelTrainConfig, dominant_frequency_track, extract_features,
                              grad_check, infer, key_embed, surrogate, surrogate_batch,
                              train_classifier, train_submodel)
from csicrypt.sensing.features import LogStandardize
from csicrypt.sensing.nn import CKPT_MAGIC, load_checkpoint
from csicrypt.timing import randomize_schedule, regular_schedule

M = 300
DT = 1e-3
FEATS = FeatureConfig(window=64, hop=16, nfft=128, max_freq_hz=40.0)
SMALL_F = SubmodelConfig(num_experts=3, embed_dim=16, gate_segments=4, gate_width=8,
                         gate_dense=(8,), encoder_channels=(2, 3, 3, 4),
                         decoder_channels=(3, 3, 2, 2, 2), subspace_rank=2, dropout=0.5)


def tone(freq, phase=0.0, m=M):
    t = np.arange(m) * DT
    return 1.0 + 0.3 * np.exp(2j * np.pi * freq * t + 1j * phase)


def toy_corpus(n_per_class=12, seed=0):
    """Two tone classes mixed by a small family of encryption matrices."""
    rng = np.random.default_rng(seed)
    psis = [sample_psi(2, M, 100 + i) for i in range(3)]
    keys = [hash_key(p) for p in psis]
    series, labels, k_out, plain = [], [], [], []
    for label, f in enumerate((10.0, -20.0)):
        for i in range(n_per_class):
            h = np.stack([tone(f, rng.uniform(0, 6.28)), tone(f, rng.uniform(0, 6.28))])
            h = h + 0.01 * (rng.standard_normal(h.shape) + 1j * rng.standard_normal(h.shape))
            p = psis[i % 3]
            series.append(np.sum(h * p.coeffs, axis=0))
            plain.append(h[0])
            labels.append(label)
            k_out.append(keys[i % 3])
    return np.array(series), np.array(labels), k_out, np.array(plain), keys


@pytest.fixture(scope="module")
def corpus():
    return toy_corpus()


@pytest.fixture(scope="module")
def classifier(corpus):
    _, labels, _, plain, _ = corpus
    sched = regular_schedule(M, DT)
    maps = np.stack([extract_features(x, sched, FEATS).spectrogram for x in plain])
    cfg = ClassifierConfig(channels=(2, 4), hidden=8, epochs=80, lr=1e-2, features=FEATS)
    return train_classifier(maps, labels, cfg)


@pytest.fixture(scope="module")
def dataset(corpus):
    series, labels, keys, plain, _ = corpus
    return SubmodelDataset(series, keys, labels, [regular_schedule(M, DT)] * len(labels),
                           targets=plain - plain.mean(axis=1, keepdims=True))


class TestKeyEmbed:
    def test_zero_key(self):
        assert not np.any(key_embed(KeyPhi(np.zeros(2048, dtype=np.uint8)), 64))

    def test_range_and_length(self):
        e = key_embed(hash_key(sample_psi(2, 5, 0)), 128)
        assert e.shape == (128,)
        assert np.all((e >= 0) & (e <= 1))

    def test_distinct(self):
        a = key_embed(hash_key(sample_psi(2, 5, 0)))
        b = key_embed(hash_key(sample_psi(2, 5, 1)))
        assert not np.array_equal(a, b)

    def test_bad_dim(self):
        with pytest.raises(InvalidArgumentError):
            key_embed(hash_key(sample_psi(2, 5, 0)), 0)


class TestFeatures:
    def test_resampler_adjoint(self, rng):
        r = Resampler.from_schedule(randomize_schedule(50, DT, 0.4, 3))
        x = rng.standard_normal(50)
        g = rng.standard_normal(50)
        assert abs(np.dot(r.apply(x), g) - np.dot(x, r.adjoint(g))) < 1e-12

    def test_regular_resampler_is_identity(self, rng):
        x = rng.standard_normal(40)
        assert np.allclose(Resampler.from_schedule(regular_schedule(40, DT)).apply(x), x)

    def test_doppler_track(self):
        fm = extract_features(tone(15.625), regular_schedule(M, DT), FEATS)
        track = dominant_frequency_track(fm)
        assert np.nanmedian(track) == pytest.approx(15.625)

    def test_short_series(self):
        with pytest.raises(InvalidArgumentError):
            extract_features(np.ones(10), regular_schedule(10, DT), FEATS)

    def test_zero_map_standardizes_to_zero(self):
        assert not np.any(LogStandardize(FEATS).forward(np.zeros((1, 5, 3))))

    def test_pipeline_matches_extractor(self):
        x = tone(10.0)
        pipe = FeaturePipeline(FEATS, M, DT)
        spec = extract_features(x, regular_schedule(M, DT), FEATS).spectrogram
        from csicrypt.sensing import standardized_input
        assert np.allclose(pipe.forward(x[None])[0], standardized_input(spec, FEATS))


class TestClassifier:
    def test_bias_free_uniform_on_zero_input(self, classifier):
        p = classifier.predict_proba(np.zeros(classifier.input_shape))
        assert np.allclose(p, 1.0 / classifier.cfg.num_classes)

    def test_learns_toy_classes(self, classifier, corpus):
        _, labels, _, plain, _ = corpus
        sched = regular_schedule(M, DT)
        hits = [infer(classifier, extract_features(x, sched, FEATS))[1] == y
                for x, y in zip(plain, labels)]
        assert np.mean(hits) == 1.0

    def test_frozen_is_read_only(self, classifier):
        assert classifier.frozen
        with pytest.raises(ValueError):
            classifier.named_parameters()[0][2][...] = 0

    def test_one_class_rejected(self):
        with pytest.raises(InvalidArgumentError):
            train_classifier(np.ones((3, 15, 11)), [1, 1, 1], ClassifierConfig(epochs=1))

    def test_wrong_input_shape(self, classifier):
        with pytest.raises(InvalidArgumentError):
            classifier.predict(np.zeros((4, 4)))

    def test_checkpoint_round_trip(self, classifier, tmp_path):
        classifier.save(tmp_path / "r.mcnn")
        assert (tmp_path / "r.mcnn").read_bytes()[:5] == CKPT_MAGIC
        back = ClassifierR.load(tmp_path / "r.mcnn", FEATS)
        assert back.param_digest() == classifier.param_digest()
        assert back.frozen

    def test_bad_checkpoint(self, tmp_path):
        (tmp_path / "x").write_bytes(b"nope" * 10)
        with pytest.raises(InvalidArgumentError):
            load_checkpoint(tmp_path / "x")


class TestGradients:
    def test_linear_toy_exact(self):
        rep = grad_check(LinearToy(), probe_count=100)
        assert rep.passed and rep.probes == 100

    def test_classifier_backprop(self, classifier):
        rep = grad_check(classifier, probe_count=100, seed=1)
        assert rep.max_rel_error < 1e-4
        assert rep.probes >= 100

    def test_submodel_backprop_quadratic(self):
        rep = grad_check(SubmodelF(M, SMALL_F), probe_count=100, seed=2)
        assert rep.max_rel_error < 1e-4

    def test_submodel_through_frozen_classifier(self, classifier, dataset):
        rep = grad_check(SubmodelF(M, SMALL_F), probe_count=100, classifier=classifier,
                         data=dataset, seed=3)
        assert rep.max_rel_error < 1e-4

    def test_no_probes(self):
        rep = grad_check(LinearToy(), probe_count=0)
        assert rep.no_probes and rep.passed


class TestSubmodel:
    def test_gates_binary_and_never_all_closed(self, corpus):
        series, _, keys, _, _ = corpus
        g = SubmodelF(M, SMALL_F).infer_gates(series, keys)
        assert set(np.unique(g)) <= {0.0, 1.0}
        assert np.all(g.sum(axis=1) >= 1)

    def test_untrained_surrogate_raises(self, corpus):
        series, _, keys, _, _ = corpus
        with pytest.raises(UninitializedModelError):
            surrogate(SubmodelF(M, SMALL_F), series[0], keys[0])

    def test_length_mismatch(self):
        m = SubmodelF(M, SMALL_F)
        with pytest.raises(InvalidArgumentError):
            m.forward(np.ones((1, M - 1), complex), np.ones((1, 3)))

    def test_needs_frozen_classifier(self, dataset):
        r = ClassifierR((15, 11), ClassifierConfig(channels=(2, 4), hidden=8, features=FEATS))
        with pytest.raises(ContractViolationError):
            train_submodel(SubmodelF(M, SMALL_F), r, dataset)

    def test_needs_two_keys(self, classifier, corpus):
        series, labels, keys, _, _ = corpus
        one = SubmodelDataset(series[:4], [keys[0]] * 4, labels[:4],
                              [regular_schedule(M, DT)] * 4)
        with pytest.raises(InvalidArgumentError):
            train_submodel(SubmodelF(M, SMALL_F), classifier, one)

    def test_training_keeps_classifier_and_round_trips(self, classifier, dataset, corpus,
                                                       tmp_path):
        model = SubmodelF(M, SMALL_F)
        run = train_submodel(model, classifier, dataset,
                             SubmodelTrainConfig(epochs=3, batch_size=8))
        assert len(run.loss_curve) == 4
        assert run.param_digest_before == run.param_digest_after
        assert np.all(np.isfinite(run.loss_curve))
        model.save(tmp_path / "f.mcnn")
        back = SubmodelF.load(tmp_path / "f.mcnn")
        series, _, keys, _, _ = corpus
        assert np.array_equal(surrogate_batch(back, series[:5], keys[:5]),
                              surrogate_batch(model, series[:5], keys[:5]))

    def test_bad_config(self):
        with pytest.raises(InvalidArgumentError):
            SubmodelConfig(num_experts=0)
        with pytest.raises(InvalidArgumentError):
            SubmodelConfig(decoder_channels=(2, 2, 2, 2, 3))
