import logging
from typing import List, Tuple, Optional

import cv2
import numpy as np

from ..models.data_models import VideoSample, ObjectTrack
from ..models.scene_models import (
    SceneSpec, SpriteSpec, SoundSignature, COLORS, SHAPES, ENVELOPES, BACKGROUND_RGB,
)
from ..manifest_store.manifest_store import frame_ref, audio_ref, float_to_pcm
from ..manifest_store.rle_codec import encode_rle
from ..utils.config import SynthConfig
from ..utils.errors import DataError

CARRIERS_HZ = [220.0, 277.0, 330.0, 392.0, 440.0, 523.0, 587.0, 659.0, 784.0, 880.0]
PULSE_HZ = 4.0
CHIRP_PERIOD = 0.5
PEAK = 0.9
INACTIVE_SHADE = 0.55


def rasterize_sprite(shape: str, x: float, y: float, size: int, height: int, width: int) -> np.ndarray:
    """Binary uint8 mask of one sprite centred at (x, y)"""
    if size < 1:
        raise DataError(f"zero-area sprite (size={size})")
    mask = np.zeros((height, width), dtype=np.uint8)
    cx, cy = int(round(x)), int(round(y))
    if shape == "circle":
        cv2.circle(mask, (cx, cy), size, 1, thickness=-1, lineType=cv2.LINE_8)
    elif shape == "square":
        cv2.rectangle(mask, (cx - size, cy - size), (cx + size, cy + size), 1, thickness=-1)
    elif shape == "triangle":
        points = np.array([[cx, cy - size], [cx - size, cy + size], [cx + size, cy + size]], dtype=np.int32)
        cv2.fillPoly(mask, [points], 1, lineType=cv2.LINE_8)
    else:
        raise DataError(f"Unknown shape {shape}")
    if not mask.any():
        raise DataError(f"{shape} of size {size} at ({x:.1f}, {y:.1f}) rasterizes to nothing")
    return mask


def render_signature(sound: SoundSignature, num_samples: int, sample_rate: int) -> np.ndarray:
    """One sprite's sound over its active intervals, unnormalized"""
    t = np.arange(num_samples) / sample_rate
    if sound.envelope == "silent" or num_samples == 0:
        return np.zeros(num_samples, dtype=np.float64)

    if sound.envelope == "chirp":
        inst = sound.carrier_hz * (1.0 + 0.5 * (np.mod(t, CHIRP_PERIOD) / CHIRP_PERIOD))
        phase = 2 * np.pi * np.cumsum(inst) / sample_rate
        wave = np.sin(phase)
    else:
        wave = np.sin(2 * np.pi * sound.carrier_hz * t)

    if sound.envelope == "pulsed":
        wave = wave * (np.floor(t * PULSE_HZ * 2) % 2 == 0)

    active = np.zeros(num_samples, dtype=bool)
    for start, end in sound.active_intervals:
        active |= (t >= start) & (t < end)
    return wave * active


def peak_normalize(wave: np.ndarray, peak: float = PEAK) -> np.ndarray:
    top = np.abs(wave).max() if wave.size else 0.0
    return wave if top == 0 else wave * (peak / top)


def shade(color: Tuple[int, int, int], active: bool) -> np.ndarray:
    rgb = np.array(color, dtype=np.float64)
    return np.round(rgb if active else rgb * INACTIVE_SHADE).astype(np.uint8)


class SceneGenerator:
    """Renders SceneSpecs into VideoSamples with exact masks and a mixed audio track"""

    def __init__(self, config: SynthConfig):
        self.config = config
        self.logger = logging.getLogger(__name__)

    def generate_scene(self, spec: SceneSpec) -> VideoSample:
        """Rasterize frames at spec.fps, mix the audio and record per-frame masks"""
        spec.validate()
        n_frames = spec.num_frames
        sid = spec.scene_id
        sample = VideoSample(
            sample_id=sid,
            frames=[frame_ref(sid, k) for k in range(n_frames)],
            fps=spec.fps,
            audio=audio_ref(sid),
            sample_rate=spec.sample_rate,
            height=spec.height,
            width=spec.width,
            metadata={"preset": spec.preset, "seed": spec.seed, "duration": n_frames / spec.fps},
        )

        tracks = {s.sprite_id: ObjectTrack(object_id=s.sprite_id, masks={}, attributes=self._attributes(s))
                  for s in spec.sprites}

        for k in range(n_frames):
            t = k / spec.fps
            frame = np.empty((spec.height, spec.width, 3), dtype=np.uint8)
            frame[:] = BACKGROUND_RGB
            for sprite in spec.sprites:
                x, y = sprite.position(t)
                mask = rasterize_sprite(sprite.shape, x, y, sprite.size, spec.height, spec.width)
                frame[mask == 1] = shade(COLORS[sprite.color], sprite.sound.is_active(t))
                tracks[sprite.sprite_id].masks[k] = encode_rle(mask)
            sample.media[sample.frames[k]] = frame

        num_samples = int(round(n_frames * spec.sample_rate / spec.fps))
        mix = np.zeros(num_samples, dtype=np.float64)
        for sprite in spec.sprites:
            mix += render_signature(sprite.sound, num_samples, spec.sample_rate)
        sample.media[sample.audio] = float_to_pcm(peak_normalize(mix))

        sample.objects = [tracks[s.sprite_id] for s in spec.sprites]
        self.logger.debug(f"Rendered scene {sid}: {n_frames} frames, {len(spec.sprites)} sprites")
        return sample

    @staticmethod
    def _attributes(sprite: SpriteSpec) -> dict:
        return {
            "shape": sprite.shape,
            "color": sprite.color,
            "size": sprite.size,
            "envelope": sprite.sound.envelope,
            "carrier_hz": sprite.sound.carrier_hz,
            "active_intervals": [list(iv) for iv in sprite.sound.active_intervals],
        }

    def render_sound_payload(self, sound: SoundSignature) -> np.ndarray:
        """A sprite's signature rendered alone, as if active for the whole payload clip"""
        seconds = self.config.payload_seconds
        isolated = SoundSignature(carrier_hz=sound.carrier_hz, envelope=sound.envelope,
                                  active_intervals=[(0.0, seconds)])
        num_samples = int(round(seconds * self.config.sample_rate))
        return float_to_pcm(peak_normalize(render_signature(isolated, num_samples, self.config.sample_rate)))

    def render_image_payload(self, shape: str, color: str, size: int) -> np.ndarray:
        """The sprite alone, cropped to its bounding box (one pixel of margin) and scaled to frame size"""
        height, width = self.config.height, self.config.width
        mask = rasterize_sprite(shape, width / 2, height / 2, size, height, width)
        ys, xs = np.nonzero(mask)
        top, bottom = max(int(ys.min()) - 1, 0), min(int(ys.max()) + 2, height)
        left, right = max(int(xs.min()) - 1, 0), min(int(xs.max()) + 2, width)
        crop = np.empty((bottom - top, right - left, 3), dtype=np.uint8)
        crop[:] = BACKGROUND_RGB
        crop[mask[top:bottom, left:right] == 1] = shade(COLORS[color], True)
        return cv2.resize(crop, (width, height), interpolation=cv2.INTER_NEAREST)

    # ---- scene specs ----

    def random_scene_spec(self, scene_id: str, seed: int, preset: Optional[str] = None) -> SceneSpec:
        """Draw a SceneSpec for the given preset, deterministic in seed"""
        preset = preset or self.config.preset
        rng = np.random.default_rng(seed)
        fps = int(rng.integers(self.config.fps_min, self.config.fps_max + 1))
        duration = float(rng.uniform(self.config.min_duration, self.config.max_duration))
        n_frames = max(1, int(round(duration * fps)))
        duration = n_frames / fps

        if preset == "crossing":
            sprites = self._crossing_sprites(rng, duration)
        elif preset == "sync":
            sprites = self._sync_sprites(rng, duration)
        elif preset == "random":
            sprites = self._random_sprites(rng, duration)
        else:
            raise DataError(f"Unknown scene preset {preset}")

        return SceneSpec(scene_id=scene_id, height=self.config.height, width=self.config.width,
                         duration=duration, fps=fps, sprites=sprites, seed=seed,
                         sample_rate=self.config.sample_rate, preset=preset)

    def _random_point(self, rng: np.random.Generator, size: int) -> Tuple[float, float]:
        x = rng.uniform(size, self.config.width - 1 - size)
        y = rng.uniform(size, self.config.height - 1 - size)
        return float(round(x, 2)), float(round(y, 2))

    def _random_intervals(self, rng: np.random.Generator, duration: float) -> List[Tuple[float, float]]:
        start = float(round(rng.uniform(0.0, duration * 0.5), 3))
        end = float(round(rng.uniform(start + duration * 0.25, duration), 3))
        return [(start, min(end, duration))]

    def _random_sprites(self, rng: np.random.Generator, duration: float) -> List[SpriteSpec]:
        n = int(rng.integers(self.config.min_sprites, self.config.max_sprites + 1))
        carriers = rng.choice(CARRIERS_HZ, size=n, replace=False)
        # a small palette per scene so attributes get shared
        palette = rng.choice(list(COLORS), size=max(2, n - 1), replace=False)
        envelopes = list(rng.choice(ENVELOPES, size=n))
        if all(e == "silent" for e in envelopes):
            envelopes[0] = "steady"

        sprites = []
        for i in range(n):
            size = int(rng.integers(self.config.sprite_size_min, self.config.sprite_size_max + 1))
            n_points = int(rng.integers(2, 4))
            times = np.linspace(0.0, duration, n_points)
            waypoints = [(float(t),) + self._random_point(rng, size) for t in times]
            envelope = str(envelopes[i])
            intervals = [] if envelope == "silent" else self._random_intervals(rng, duration)
            sprites.append(SpriteSpec(
                sprite_id=f"obj{i}",
                shape=str(rng.choice(SHAPES)),
                color=str(rng.choice(palette)),
                size=size,
                waypoints=waypoints,
                sound=SoundSignature(carrier_hz=float(carriers[i]), envelope=envelope, active_intervals=intervals),
            ))
        return sprites

    def _crossing_sprites(self, rng: np.random.Generator, duration: float) -> List[SpriteSpec]:
        """Two identical sprites passing through the same point mid-clip; only the early cue tells them apart"""
        size = 7
        shape = str(rng.choice(SHAPES))
        color = str(rng.choice(list(COLORS)))
        margin = size + 2
        left, right = float(margin), float(self.config.width - 1 - margin)
        mid_x, mid_y = (self.config.width - 1) / 2, (self.config.height - 1) / 2
        lanes = [mid_y - 8.0, mid_y + 8.0]
        carriers = rng.choice(CARRIERS_HZ, size=2, replace=False)
        # lanes before and after the crossing are drawn independently
        start_lanes = rng.permutation(lanes)
        end_lanes = rng.permutation(lanes)
        a_starts_right = bool(rng.integers(0, 2))
        a_path = (right, left) if a_starts_right else (left, right)
        paths = [a_path, (a_path[1], a_path[0])]
        sounding = int(rng.integers(0, 2))
        cue_end = float(round(duration * 0.3, 3))
        half = float(round(duration / 2, 4))

        sprites = []
        for i in range(2):
            sound = (SoundSignature(float(carriers[i]), "steady", [(0.0, cue_end)]) if i == sounding
                     else SoundSignature(float(carriers[i]), "silent", []))
            waypoints = [(0.0, paths[i][0], float(start_lanes[i])),
                         (half, mid_x, mid_y),
                         (duration, paths[i][1], float(end_lanes[i]))]
            sprites.append(SpriteSpec(f"obj{i}", shape, color, size, waypoints, sound))
        return sprites

    def _sync_sprites(self, rng: np.random.Generator, duration: float) -> List[SpriteSpec]:
        """Two look-alike sprites sounding alternately at different pitches"""
        size = 7
        shape = str(rng.choice(SHAPES))
        color = str(rng.choice(list(COLORS)))
        low, high = sorted(rng.choice(CARRIERS_HZ, size=2, replace=False))
        quarter = duration / 4
        first = [(0.0, quarter), (2 * quarter, 3 * quarter)]
        second = [(quarter, 2 * quarter), (3 * quarter, duration)]
        if rng.integers(0, 2):
            first, second = second, first
        first = [(float(round(a, 4)), min(float(round(b, 4)), duration)) for a, b in first]
        second = [(float(round(a, 4)), min(float(round(b, 4)), duration)) for a, b in second]

        sprites = []
        for i, (carrier, intervals) in enumerate([(float(low), first), (float(high), second)]):
            start = self._random_point(rng, size)
            end = self._random_point(rng, size)
            sprites.append(SpriteSpec(f"obj{i}", shape, color, size,
                                      [(0.0,) + start, (duration,) + end],
                                      SoundSignature(carrier, "steady", intervals)))
        return sprites
