from typing import List

import numpy as np

from ..core_lm.tokenizer import WordTokenizer
from ..models.vocabulary import PLACEHOLDERS
from ..utils.errors import ConfigError, DataError

SYMBOLS_PER_TOKEN = 2
ALPHABET = 16


class ToneCodec:
    """
    Deterministic stand-in for text-to-speech.

    Each token id is written as two base-16 digits; each digit is one tone
    symbol of fixed length at frequency base_hz + digit * step_hz. The mapping
    from id sequences to waveforms is injective and a matched filter inverts it.
    """

    def __init__(self, tokenizer: WordTokenizer, sample_rate: int = 16000,
                 symbol_samples: int = 800, base_hz: float = 500.0, step_hz: float = 100.0,
                 amplitude: float = 0.5):
        if len(tokenizer) > ALPHABET ** SYMBOLS_PER_TOKEN:
            raise ConfigError(f"Vocabulary of {len(tokenizer)} ids does not fit two tone symbols")
        self.tokenizer = tokenizer
        self.sample_rate = sample_rate
        self.symbol_samples = symbol_samples
        self.amplitude = amplitude
        self.frequencies = base_hz + step_hz * np.arange(ALPHABET)
        t = np.arange(symbol_samples) / sample_rate
        self._sin = np.sin(2 * np.pi * self.frequencies[:, None] * t[None, :])
        self._cos = np.cos(2 * np.pi * self.frequencies[:, None] * t[None, :])

    def text_ids(self, text: str) -> List[int]:
        for placeholder in PLACEHOLDERS:
            text = text.replace(placeholder, " ")
        unknown = [w for w in self.tokenizer.split(text) if w not in self.tokenizer.token_to_id]
        if unknown:
            raise DataError(f"Cannot speak out-of-vocabulary words {unknown}")
        return self.tokenizer.encode(text)

    def encode_ids(self, ids: List[int]) -> np.ndarray:
        if not ids:
            return np.zeros(0, dtype=np.float32)
        digits = []
        for token_id in ids:
            digits.extend([token_id // ALPHABET, token_id % ALPHABET])
        wave = self.amplitude * self._sin[digits].reshape(-1)
        return wave.astype(np.float32)

    def synth_speech(self, text: str) -> np.ndarray:
        """Render text as a tone-code waveform; empty text gives an empty waveform; unknown words raise DataError"""
        return self.encode_ids(self.text_ids(text))

    def decode_speech(self, wave: np.ndarray) -> List[int]:
        """Matched-filter decoder: recovers the token ids written by synth_speech"""
        wave = np.asarray(wave, dtype=np.float64)
        n_symbols = len(wave) // self.symbol_samples
        n_symbols -= n_symbols % SYMBOLS_PER_TOKEN
        if n_symbols == 0:
            return []
        frames = wave[: n_symbols * self.symbol_samples].reshape(n_symbols, self.symbol_samples)
        power = (frames @ self._sin.T) ** 2 + (frames @ self._cos.T) ** 2
        digits = power.argmax(axis=1)
        return [int(hi * ALPHABET + lo) for hi, lo in zip(digits[0::2], digits[1::2])]
