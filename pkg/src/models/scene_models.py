from dataclasses import dataclass, field
from typing import List, Tuple, Dict, Any

from ..utils.errors import DataError


SHAPES = ("circle", "square", "triangle")
ENVELOPES = ("steady", "pulsed", "chirp", "silent")

# RGB
COLORS: Dict[str, Tuple[int, int, int]] = {
    "red": (220, 40, 40),
    "green": (40, 180, 60),
    "blue": (50, 80, 220),
    "yellow": (230, 210, 40),
    "purple": (150, 60, 190),
    "orange": (240, 140, 30),
}

BACKGROUND_RGB = (24, 24, 24)


@dataclass
class SoundSignature:
    """What a sprite sounds like and when"""
    carrier_hz: float
    envelope: str = "steady"
    active_intervals: List[Tuple[float, float]] = field(default_factory=list)

    def is_active(self, t: float) -> bool:
        if self.envelope == "silent":
            return False
        return any(start <= t < end for start, end in self.active_intervals)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "carrier_hz": self.carrier_hz,
            "envelope": self.envelope,
            "active_intervals": [list(iv) for iv in self.active_intervals],
        }


@dataclass
class SpriteSpec:
    """A moving shape; waypoints are (time, x, y) with piecewise-linear motion"""
    sprite_id: str
    shape: str
    color: str
    size: int
    waypoints: List[Tuple[float, float, float]]
    sound: SoundSignature

    def position(self, t: float) -> Tuple[float, float]:
        times = [w[0] for w in self.waypoints]
        if t <= times[0]:
            return self.waypoints[0][1], self.waypoints[0][2]
        for (t0, x0, y0), (t1, x1, y1) in zip(self.waypoints, self.waypoints[1:]):
            if t0 <= t <= t1:
                a = 0.0 if t1 == t0 else (t - t0) / (t1 - t0)
                return x0 + a * (x1 - x0), y0 + a * (y1 - y0)
        return self.waypoints[-1][1], self.waypoints[-1][2]


@dataclass
class SceneSpec:
    """Everything needed to render one audio-visual scene deterministically"""
    scene_id: str
    height: int
    width: int
    duration: float
    fps: int
    sprites: List[SpriteSpec]
    seed: int
    sample_rate: int = 16000
    preset: str = "random"

    @property
    def num_frames(self) -> int:
        return int(round(self.duration * self.fps))

    def validate(self):
        if not self.sprites:
            raise DataError(f"Scene {self.scene_id} has no sprites")
        if not 3 <= self.fps <= 15:
            raise DataError(f"Scene {self.scene_id} fps {self.fps} outside [3,15]")
        carriers = [s.sound.carrier_hz for s in self.sprites]
        if len(set(carriers)) != len(carriers):
            raise DataError(f"Scene {self.scene_id} reuses a carrier frequency")
        for sprite in self.sprites:
            if sprite.shape not in SHAPES:
                raise DataError(f"Unknown shape {sprite.shape}")
            if sprite.color not in COLORS:
                raise DataError(f"Unknown color {sprite.color}")
            if sprite.sound.envelope not in ENVELOPES:
                raise DataError(f"Unknown envelope {sprite.sound.envelope}")
            if sprite.size < 1:
                raise DataError(f"Sprite {sprite.sprite_id} has zero area (size={sprite.size})")
            for start, end in sprite.sound.active_intervals:
                if not 0 <= start <= end <= self.duration:
                    raise DataError(f"Sprite {sprite.sprite_id} interval ({start}, {end}) outside duration")
            for _, x, y in sprite.waypoints:
                if not (sprite.size <= x <= self.width - 1 - sprite.size
                        and sprite.size <= y <= self.height - 1 - sprite.size):
                    raise DataError(f"Sprite {sprite.sprite_id} waypoint ({x}, {y}) leaves the canvas")
