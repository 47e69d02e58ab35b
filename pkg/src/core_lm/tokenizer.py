import json
import re
import logging
from pathlib import Path
from typing import List, Optional, Dict

from ..models.vocabulary import SPECIAL_TOKENS, UNK, PAD, BOS, EOS, SEG, SOUND, IMAGE, FRAME, vocabulary_words
from ..utils.errors import ConfigError

TOKEN_PATTERN = re.compile(r"\[[A-Z]+\]|<[A-Za-z]+>|[?.:,]|[^\s?.:,]+")


class WordTokenizer:
    """Word-level tokenizer over the closed expression language plus special tokens"""

    def __init__(self, id_to_token: Optional[List[str]] = None):
        self.logger = logging.getLogger(__name__)
        self.id_to_token = list(id_to_token) if id_to_token else SPECIAL_TOKENS + vocabulary_words()
        self.token_to_id: Dict[str, int] = {t: i for i, t in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise ConfigError("Tokenizer vocabulary contains duplicates")

    def __len__(self) -> int:
        return len(self.id_to_token)

    @property
    def pad_id(self) -> int:
        return self.token_to_id[PAD]

    @property
    def bos_id(self) -> int:
        return self.token_to_id[BOS]

    @property
    def eos_id(self) -> int:
        return self.token_to_id[EOS]

    @property
    def seg_id(self) -> int:
        return self.token_to_id[SEG]

    @property
    def sound_id(self) -> int:
        return self.token_to_id[SOUND]

    @property
    def image_id(self) -> int:
        return self.token_to_id[IMAGE]

    @property
    def frame_id(self) -> int:
        return self.token_to_id[FRAME]

    def split(self, text: str) -> List[str]:
        pieces = TOKEN_PATTERN.findall(text)
        return [p if p in self.token_to_id and p in SPECIAL_TOKENS else p.lower() for p in pieces]

    def encode(self, text: str) -> List[int]:
        unk = self.token_to_id[UNK]
        ids = [self.token_to_id.get(piece, unk) for piece in self.split(text)]
        if unk in ids:
            self.logger.debug(f"Out-of-vocabulary words in: {text!r}")
        return ids

    def decode(self, ids: List[int], skip_special: bool = False) -> str:
        tokens = []
        for i in ids:
            token = self.id_to_token[i] if 0 <= i < len(self.id_to_token) else UNK
            if skip_special and token in SPECIAL_TOKENS:
                continue
            tokens.append(token)
        return " ".join(tokens)

    def save(self, path: Path):
        with open(path, "w") as f:
            json.dump({"id_to_token": self.id_to_token}, f, indent=1)

    @classmethod
    def load(cls, path: Path) -> "WordTokenizer":
        with open(path, "r") as f:
            data = json.load(f)
        return cls(data["id_to_token"])
