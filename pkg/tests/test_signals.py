import numpy as np
import pytest

from nearfield.signals import (
    DEFAULT_VOCABULARY,
    MAX_VOCABULARY,
    decode_words,
    encode_utterance,
    utterance_duration_s,
    word_frequencies,
    word_signal_span,
    word_waveform,
)


class TestCodebook:
    def test_vocabulary_size_and_uniqueness(self):
        assert len(DEFAULT_VOCABULARY) == 64
        assert len(set(DEFAULT_VOCABULARY)) == 64

    def test_frequencies_unique_per_index(self):
        pairs = {word_frequencies(i) for i in range(MAX_VOCABULARY)}
        assert len(pairs) == MAX_VOCABULARY

    def test_index_out_of_range(self):
        with pytest.raises(ValueError):
            word_frequencies(64)

    def test_waveform_length(self):
        assert len(word_waveform(0)) == 4000


class TestEncode:
    def test_duration_formula(self):
        assert utterance_duration_s(1) == 0.25
        assert utterance_duration_s(4) == pytest.approx(1.15)
        sig = encode_utterance(["okay", "no", "stop", "yes"])
        assert len(sig) == int(1.15 * 16000)

    def test_unknown_word_rejected(self):
        with pytest.raises(ValueError):
            encode_utterance(["notaword"])

    def test_word_signal_span(self):
        assert word_signal_span(2.0, 0) == (2.0, 2.25)
        assert word_signal_span(2.0, 2) == (2.6, 2.85)


class TestDecode:
    def test_round_trip_every_word(self):
        for i in range(0, 64, 7):
            word = DEFAULT_VOCABULARY[i]
            assert decode_words(encode_utterance([word])) == [word]

    def test_round_trip_sentence(self):
        words = ["license", "registration", "please", "ma'am", "stop"]
        assert decode_words(encode_utterance(words)) == words

    def test_silence_decodes_empty(self):
        assert decode_words(np.zeros(16000)) == []

    def test_noise_decodes_empty(self):
        rng = np.random.default_rng(3)
        assert decode_words(rng.normal(0, 0.01, 16000)) == []

    def test_robust_to_noise_and_gain(self):
        rng = np.random.default_rng(4)
        words = ["hands", "wheel", "slow"]
        sig = 0.2 * encode_utterance(words) + rng.normal(0, 0.01, int(0.85 * 16000))
        assert decode_words(sig) == words

    def test_heavily_clipped_word_dropped(self):
        sig = encode_utterance(["okay", "stop"])
        # Keep only the last 60 ms of the first word's 250 ms signature.
        clipped = sig[int(0.19 * 16000):]
        assert decode_words(clipped) == ["stop"]

    def test_surrounding_silence_ignored(self):
        words = ["red", "light"]
        padded = np.concatenate([np.zeros(2000), encode_utterance(words), np.zeros(2000)])
        assert decode_words(padded) == words
