"""
Closed language shared by the expression generator, the tokenizer and the
tone-code speech synthesizer.
"""
from typing import Dict, List

from .scene_models import COLORS, SHAPES

PAD = "[PAD]"
BOS = "[BOS]"
EOS = "[EOS]"
UNK = "[UNK]"
SEG = "[SEG]"
SOUND = "<SOUND>"
IMAGE = "<IMAGE>"
FRAME = "<frame>"

SPECIAL_TOKENS: List[str] = [PAD, BOS, EOS, UNK, SEG, SOUND, IMAGE, FRAME]
PLACEHOLDERS = (SOUND, IMAGE)

SHAPE_PLURALS: Dict[str, str] = {"circle": "circles", "square": "squares", "triangle": "triangles"}

ENVELOPE_PHRASES: Dict[str, str] = {
    "steady": "sounding steadily",
    "pulsed": "sounding intermittently",
    "chirp": "making a rising tone",
    "silent": "staying silent",
}

# envelope -> (what the object is probably doing, explanation)
REASONING_PHRASES: Dict[str, tuple] = {
    "pulsed": ("raising an alarm", "because its sound is pulsed"),
    "chirp": ("calling for attention", "because its tone keeps rising"),
    "steady": ("a running engine", "because its sound is steady"),
    "silent": ("switched off", "because it makes no sound"),
}

TEMPLATES: Dict[str, str] = {
    "attribute": "the {color} {shape}",
    "color_all": "all {color} objects",
    "shape_all": "all {shape_plural}",
    "sound_content": "the object {envelope_phrase}",
    "sound_content_all": "all objects {envelope_phrase}",
    "reasoning": "which object is most likely {reason} ?",
    "pitch": "the object making the {pitch} pitched sound",
    "first_sounder": "the object that sounds first",
    "sound_payload": "the object making this sound : <SOUND>",
    "image_payload": "the object that looks like this : <IMAGE>",
    "image_payload_all": "all objects that look like this : <IMAGE>",
    "sound_image_and": "the object that looks like <IMAGE> and makes this sound <SOUND>",
    "sound_image_or": "both the object making this sound <SOUND> and the one like <IMAGE>",
}

ANSWER_SINGLE = "it is"
ANSWER_MULTI = "they are"
ANSWER_NONE = "there is no such object"

PUNCTUATION = ["?", ".", ":", ","]

SYSTEM_PROMPT = "segment the referred object ."


def _words(text: str) -> List[str]:
    return [w for w in text.replace("{", " {").replace("}", "} ").split() if not w.startswith("{")]


def vocabulary_words() -> List[str]:
    """Every non-special word the generator can produce, sorted"""
    words = set(PUNCTUATION)
    words.update(COLORS)
    words.update(SHAPES)
    words.update(SHAPE_PLURALS.values())
    words.update(["higher", "lower"])
    for phrase in ENVELOPE_PHRASES.values():
        words.update(phrase.split())
    for reason, explanation in REASONING_PHRASES.values():
        words.update(reason.split())
        words.update(explanation.split())
    for template in TEMPLATES.values():
        words.update(w for w in _words(template) if w not in PLACEHOLDERS)
    for answer in (ANSWER_SINGLE, ANSWER_MULTI, ANSWER_NONE):
        words.update(answer.split())
    words.update(["and", "because"])
    words.update(SYSTEM_PROMPT.split())
    return sorted(words)
