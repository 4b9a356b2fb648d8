import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from imvalign import data
from imvalign.data import SynthTaskConfig, TranscriptionExample


def test_onehot_features_are_token_rows():
    cfg = SynthTaskConfig(vocab_size=6, feature_dim=6, tokens_min=2, tokens_max=5, frames_min=1, frames_max=1,
                          onehot_prototypes=True)
    for ex in data.gen_corpus(cfg, 20):
        np.testing.assert_array_equal(ex.features, np.eye(6)[ex.tokens])


def test_same_seed_same_examples():
    cfg = SynthTaskConfig(seed=5, noise_std=0.3)
    a, b = data.gen_corpus(cfg, 10, stream=2), data.gen_corpus(cfg, 10, stream=2)
    for x, y in zip(a, b):
        assert x.tokens == y.tokens and x.features.tobytes() == y.features.tobytes()


def test_streams_share_prototypes_but_differ():
    cfg = SynthTaskConfig(seed=5)
    a, b = data.gen_corpus(cfg, 5, stream=0), data.gen_corpus(cfg, 5, stream=1)
    assert [x.tokens for x in a] != [x.tokens for x in b]
    protos = data.prototypes(cfg)
    for ex in a + b:
        np.testing.assert_array_equal(ex.features, protos[np.asarray(ex.tokens)[ex.true_alignment]])


def test_mean_frames_law_of_large_numbers():
    cfg = SynthTaskConfig(seed=1)
    corpus = data.gen_corpus(cfg, 1000)
    mean_T = np.mean([ex.num_frames for ex in corpus])
    mean_L = np.mean([len(ex.tokens) for ex in corpus])
    assert abs(mean_T - mean_L * 3.5) <= 0.05 * mean_L * 3.5


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(0, 4), st.integers(1, 4), st.integers(0, 3), st.integers(0, 1000))
def test_alignment_is_monotone_surjection(lmin, lspan, rmin, rspan, seed):
    if lmin * rmin < 2 and (lmin + lspan) * (rmin + rspan) < 2:
        return
    cfg = SynthTaskConfig(tokens_min=lmin, tokens_max=lmin + lspan, frames_min=rmin, frames_max=rmin + rspan,
                          seed=seed)
    for ex in data.gen_corpus(cfg, 5):
        a = np.asarray(ex.true_alignment)
        assert a[0] == 0 and a[-1] == len(ex.tokens) - 1
        assert set(np.diff(a)) <= {0, 1}
        counts = np.bincount(a)
        assert counts.min() >= rmin and counts.max() <= rmin + rspan


@pytest.mark.parametrize("kwargs", [dict(frames_min=4, frames_max=2), dict(tokens_min=0), dict(noise_std=-1.0),
                                    dict(vocab_size=30, feature_dim=16, onehot_prototypes=True)])
def test_invalid_task_config(kwargs):
    with pytest.raises(ValueError):
        SynthTaskConfig(**kwargs)


class TestExample:
    def test_needs_two_frames(self):
        with pytest.raises(ValueError):
            TranscriptionExample(np.zeros((1, 3)), [0])

    def test_needs_a_token(self):
        with pytest.raises(ValueError):
            TranscriptionExample(np.zeros((3, 3)), [])

    @pytest.mark.parametrize("L, align", [(3, [0, 2, 2]), (2, [1, 1, 1]), (2, [0, 1, 0]), (1, [0, 0]),
                                          (2, [0, 0, 0])])
    def test_bad_alignment(self, L, align):
        with pytest.raises(ValueError):
            TranscriptionExample(np.zeros((3, 2)), list(range(L)), align)


class TestCorpusFile:
    def test_round_trip_is_bitwise(self, tmp_path):
        cfg = SynthTaskConfig(noise_std=0.7, seed=3)
        corpus = data.gen_corpus(cfg, 12)
        corpus.append(TranscriptionExample(np.array([[1e-300, -0.0], [np.pi, 1 / 3]]), [2]))
        path = tmp_path / "c.txt"
        assert data.write_corpus(corpus, path) == 13
        back = data.read_corpus(path)
        assert len(back) == 13
        for a, b in zip(corpus, back):
            assert a.tokens == b.tokens and a.true_alignment == b.true_alignment
            assert a.features.tobytes() == b.features.tobytes()
        again = tmp_path / "d.txt"
        data.write_corpus(back, again)
        assert path.read_bytes() == again.read_bytes()

    def test_empty_corpus(self, tmp_path):
        path = tmp_path / "e.txt"
        data.write_corpus([], path)
        assert data.read_corpus(path) == []

    def test_header_line(self, tmp_path):
        path = tmp_path / "c.txt"
        data.write_corpus(data.gen_corpus(SynthTaskConfig(), 1), path)
        assert path.read_text().splitlines()[0] == "IMVALIGN-CORPUS v1"

    def test_truncated(self, tmp_path):
        path = tmp_path / "c.txt"
        data.write_corpus(data.gen_corpus(SynthTaskConfig(), 3), path)
        text = path.read_text()
        path.write_text(text[: len(text) // 2])
        with pytest.raises(data.CorpusTruncatedError):
            data.read_corpus(path)

    def test_missing_record(self, tmp_path):
        path = tmp_path / "c.txt"
        data.write_corpus(data.gen_corpus(SynthTaskConfig(), 3), path)
        lines = path.read_text().splitlines(keepends=True)
        path.write_text("".join(lines[:2] + lines[3:]))
        with pytest.raises(data.CorpusTruncatedError):
            data.read_corpus(path)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "c.txt"
        path.write_text("hello\nEND 0\n")
        with pytest.raises(data.CorpusHeaderError):
            data.read_corpus(path)

    def test_version_mismatch(self, tmp_path):
        path = tmp_path / "c.txt"
        path.write_text("IMVALIGN-CORPUS v9\nEND 0\n")
        with pytest.raises(data.CorpusVersionError):
            data.read_corpus(path)

    def test_errors_are_distinct(self):
        kinds = {data.CorpusHeaderError, data.CorpusVersionError, data.CorpusTruncatedError}
        assert len(kinds) == 3 and all(issubclass(k, data.CorpusError) for k in kinds)


class TestVocab:
    def test_ids_are_line_numbers(self, tmp_path):
        path = tmp_path / "v.txt"
        path.write_text("a\nb\nc\n")
        assert data.load_vocab(path) == {"a": 0, "b": 1, "c": 2}

    def test_duplicate(self, tmp_path):
        path = tmp_path / "v.txt"
        path.write_text("a\nb\na\n")
        with pytest.raises(data.VocabError):
            data.load_vocab(path)

    def test_empty(self, tmp_path):
        path = tmp_path / "v.txt"
        path.write_text("")
        assert data.load_vocab(path) == {}

    def test_round_trip(self, tmp_path):
        path = tmp_path / "v.txt"
        data.write_vocab(data.default_vocab(7), path)
        assert list(data.load_vocab(path)) == data.default_vocab(7)
