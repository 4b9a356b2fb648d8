import numpy as np
import pytest

from imvalign import checkpoint as ckpt_io
from imvalign.data import SynthTaskConfig, gen_corpus
from imvalign.model import ModelConfig, Transducer
from imvalign.optim import SGD, Adam, clip_grad_norm, make_optimizer
from imvalign.params import ParameterStore
from imvalign.train import NonFiniteLoss, TrainConfig, Trainer, example_order, train_step

SMALL = dict(vocab_size=20, feature_dim=16, dim=16, heads=2, encoder_layers=1, decoder_layers=1, ffn_mult=2)


@pytest.fixture(scope="module")
def corpus():
    return gen_corpus(SynthTaskConfig(seed=0), 50)


def small_model(seed=0, **kw):
    return Transducer(ModelConfig(**{**SMALL, **kw}), seed=seed)


class TestConfig:
    @pytest.mark.parametrize("kw", [dict(steps=-1), dict(lr=0.0), dict(optimizer="rmsprop"), dict(accumulate=0),
                                    dict(decay_fraction=1.5), dict(grad_clip=-1.0), dict(log_interval=-2)])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            TrainConfig(**kw)

    def test_constant_lr_by_default(self):
        cfg = TrainConfig(steps=100)
        assert {cfg.lr_at(s) for s in range(100)} == {1e-3}

    def test_linear_decay_over_the_tail(self):
        cfg = TrainConfig(steps=100, lr=1.0, decay_fraction=0.5)
        assert cfg.lr_at(0) == cfg.lr_at(49) == 1.0
        assert cfg.lr_at(50) == pytest.approx(1.0)
        assert cfg.lr_at(75) == pytest.approx(0.5)
        assert cfg.lr_at(99) == pytest.approx(0.02)


def test_example_order_is_an_epoch_permutation():
    n = 7
    for epoch in range(3):
        drawn = sorted(example_order(n, epoch * n + i, seed=4) for i in range(n))
        assert drawn == list(range(n))
    assert [example_order(n, k, 4) for k in range(n)] != [example_order(n, k, 5) for k in range(n)]


def test_full_set_loss_decreases(corpus):
    # one step = gradient over the whole 50-example set, so history[k] is the
    # full-set loss before step k
    model = small_model()
    hist = np.array(Trainer(model, corpus, TrainConfig(steps=200, log_interval=0, accumulate=50)).run())
    assert len(hist) == 200
    assert (np.diff(hist) < 0).mean() >= 0.9
    assert hist[-1] < 0.25 * hist[0]


def test_same_seed_same_trajectory(corpus):
    runs = []
    for _ in range(2):
        model = small_model(seed=1)
        hist = Trainer(model, corpus, TrainConfig(steps=15, log_interval=0, seed=2)).run()
        runs.append((hist, model.params["decoder.out.w"].data.tobytes()))
    assert runs[0] == runs[1]


def test_accumulated_step_averages_gradients(corpus):
    # two examples accumulated into one SGD step == averaging their separate gradients
    a, b = small_model(seed=5, dtype="float64"), small_model(seed=5, dtype="float64")
    cfg = TrainConfig(steps=1, optimizer="sgd", lr=0.1, grad_clip=0, accumulate=2, log_interval=0)
    Trainer(a, corpus, cfg).run()
    grads = []
    for k in range(2):
        m = small_model(seed=5, dtype="float64")
        m.params.zero_grad()
        ex = corpus[example_order(len(corpus), k, cfg.seed)]
        from imvalign.train import _forward_backward
        _forward_backward(m, ex, k)
        grads.append({n: p.grad for n, p in m.params.items()})
    for name, p in b.params.items():
        p.data -= 0.1 * (grads[0][name] + grads[1][name]) / 2
    for (name, pa), pb in zip(a.params.items(), b.params.values()):
        np.testing.assert_allclose(pa.data, pb.data, atol=1e-12, err_msg=name)


def test_resume_is_bit_identical(corpus, tmp_path):
    cfg = TrainConfig(steps=20, log_interval=0, seed=3, decay_fraction=0.5, accumulate=2)
    whole = small_model(seed=2)
    full_hist = Trainer(whole, corpus, cfg).run()

    first = small_model(seed=2)
    t1 = Trainer(first, corpus, cfg)
    t1.run(10)
    path = tmp_path / "half.ckpt"
    ckpt_io.save_checkpoint(path, first, t1.optimizer, {"step": t1.step})

    ck = ckpt_io.read_checkpoint(path)
    model = ckpt_io.model_from_checkpoint(ck)
    opt = make_optimizer("adam", model.params, cfg.lr)
    opt.load_state(ck.optimizer_state())
    t2 = Trainer(model, corpus, cfg, optimizer=opt, start_step=ck.meta["step"])
    rest = t2.run()
    assert t2.step == 20
    assert t1.history + rest == full_hist
    for (name, p), q in zip(whole.params.items(), model.params.values()):
        assert p.data.tobytes() == q.data.tobytes(), name


def test_degenerate_examples_are_skipped(corpus, monkeypatch):
    from imvalign.alignment import DegenerateAlignment
    model = small_model()
    real = model.forward_train

    def flaky(features, tokens, example_id=None, delta_target=None):
        if example_id == 0:
            raise DegenerateAlignment(0.0, example_id)
        return real(features, tokens, example_id, delta_target)

    monkeypatch.setattr(model, "forward_train", flaky)
    trainer = Trainer(model, corpus, TrainConfig(steps=50, log_interval=0))
    trainer.run()
    assert trainer.skipped == [0]
    assert len(trainer.history) == 49


def test_non_finite_loss_names_the_example(corpus):
    model = small_model()
    bad = [corpus[0]] * 3
    model.params["decoder.out.b"].data[:] = np.nan
    with pytest.raises(NonFiniteLoss) as info:
        Trainer(model, bad, TrainConfig(steps=1, log_interval=0)).run()
    assert info.value.example_id in (0, 1, 2)


def test_train_step_updates_parameters(corpus):
    model = small_model()
    before = model.params["mel_encoder.in.w"].data.copy()
    out = train_step(model, make_optimizer("sgd", model.params, 0.1), corpus[0], 0)
    assert np.isfinite(out.loss_total)
    assert not np.array_equal(before, model.params["mel_encoder.in.w"].data)


def test_empty_corpus_rejected():
    with pytest.raises(ValueError):
        Trainer(small_model(), [], TrainConfig())


class TestOptim:
    def store(self, g):
        s = ParameterStore(dtype=np.float64)
        p = s.add("w", np.zeros(len(g)))
        p.grad = np.asarray(g, dtype=np.float64)
        return s, p

    def test_clip_rescales_to_max_norm(self):
        s, p = self.store([3.0, 4.0])
        assert clip_grad_norm(s, 1.0) == pytest.approx(5.0)
        np.testing.assert_allclose(p.grad, [0.6, 0.8])

    def test_clip_zero_disables(self):
        s, p = self.store([3.0, 4.0])
        clip_grad_norm(s, 0.0)
        np.testing.assert_allclose(p.grad, [3.0, 4.0])

    def test_sgd_step(self):
        s, p = self.store([1.0, -2.0])
        SGD(s, lr=0.5).step()
        np.testing.assert_allclose(p.data, [-0.5, 1.0])

    def test_adam_first_step_moves_by_lr(self):
        s, p = self.store([1e-3, -7.0])
        Adam(s, lr=0.01).step()
        np.testing.assert_allclose(p.data, [-0.01, 0.01], rtol=1e-4)

    def test_adam_state_round_trip(self):
        s, p = self.store([0.3, -0.2])
        a = Adam(s)
        a.step()
        b = Adam(s)
        b.load_state(a.state())
        assert b.step_count == 1
        np.testing.assert_array_equal(b.m["w"], a.m["w"])

    def test_frozen_parameters_do_not_move(self):
        s = ParameterStore(dtype=np.float64)
        p = s.add("w", np.ones(2), trainable=False)
        p.grad = np.ones(2)
        Adam(s).step()
        np.testing.assert_array_equal(p.data, 1.0)
