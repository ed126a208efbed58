"""Synthetic sleep scenes with known heart and breathing rates.

A scene is composed of layers over a static textured background:

* a textured body rectangle (pillow, torso, blanket),
* a textured chest rectangle that translates with breathing along the
  posture orientation,
* an elliptical face whose intensity is modulated by the pulse waveform.

Motion events shift the whole body (face and chest included) horizontally,
ramping linearly over the event. Everything is deterministic given the
seed: textures come from one stream and each frame's sensor noise from its
own pre-split stream.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import optics
from .errors import ValidationError
from .spectra import WindowPlan
from .vidio import VideoClip, atomic_write_text, write_clip

COVER_TRANSMISSION = 0.85
COVER_DIFFUSION_RADIUS = 3.0
SUPINE_INPLANE = 0.3
POSTURES = (0.0, 60.0, 90.0)

# layout as fractions of (width, height)
BODY_BOX = (0.16, 0.075, 0.78, 0.94)
CHEST_BOX = (0.22, 0.50, 0.72, 0.90)
FACE_CENTER = (0.47, 0.27)
FACE_AXES = (0.20, 0.16)


@dataclass(frozen=True)
class SceneConfig:
    width: int = 128
    height: int = 160
    fps: float = 20.0
    duration: float = 60.0
    hr: float = 72.0
    rr: float = 15.0
    pulse_amplitude: float = 0.005
    breath_amplitude: float = 2.0
    noise_sigma: float = 1.0
    covered: bool = False
    motion_events: tuple = ()
    seed: int = 0
    posture_deg: float = 0.0
    dc_scale: float = 1.0
    bit_depth: int = 8

    def __post_init__(self):
        object.__setattr__(
            self, "motion_events", tuple(tuple(float(v) for v in ev) for ev in self.motion_events)
        )

    def validate(self) -> "SceneConfig":
        if self.width < 32 or self.height < 32:
            raise ValidationError(f"frame {self.width}x{self.height} too small for the scene layout")
        if not self.fps > 0 or not self.duration > 0:
            raise ValidationError("fps and duration must be positive")
        if not 42 <= self.hr <= 180:
            raise ValidationError(f"hr {self.hr} bpm outside [42, 180]")
        if not 6 <= self.rr <= 42:
            raise ValidationError(f"rr {self.rr} bpm outside [6, 42]")
        nyq = self.fps / 2
        if self.hr / 60 >= nyq or self.rr / 60 >= nyq:
            raise ValidationError(f"rates above Nyquist ({nyq} Hz) for fps {self.fps}")
        if not 0 < self.pulse_amplitude <= 0.05 and self.pulse_amplitude != 0:
            raise ValidationError(f"pulse_amplitude {self.pulse_amplitude} outside (0, 0.05]")
        if not 0 <= self.breath_amplitude <= 10:
            raise ValidationError(f"breath_amplitude {self.breath_amplitude} outside [0, 10]")
        if self.noise_sigma < 0 or self.dc_scale <= 0:
            raise ValidationError("noise_sigma must be >= 0 and dc_scale > 0")
        if self.bit_depth not in (8, 16):
            raise ValidationError("bit_depth must be 8 or 16")
        for ev in self.motion_events:
            if len(ev) != 3 or not ev[1] > ev[0]:
                raise ValidationError(f"motion event {ev} must be (start, end, displacement) with end > start")
        self._check_layout()
        return self

    @property
    def n_frames(self) -> int:
        return int(round(self.duration * self.fps))

    def boxes(self):
        """Pixel boxes (x0, y0, x1, y1) of body and chest at rest."""
        w, h = self.width, self.height
        body = tuple(int(round(f * (w if i % 2 == 0 else h))) for i, f in enumerate(BODY_BOX))
        chest = tuple(int(round(f * (w if i % 2 == 0 else h))) for i, f in enumerate(CHEST_BOX))
        return body, chest

    def _check_layout(self):
        body, _ = self.boxes()
        offsets = np.cumsum([0.0] + [ev[2] for ev in self.motion_events])
        lo, hi = offsets.min(), offsets.max()
        margin = self.breath_amplitude
        if body[0] + lo - margin < 0 or body[2] + hi + margin > self.width:
            raise ValidationError(
                f"layout error: body spans x in [{body[0] + lo:.1f}, {body[2] + hi:.1f}) "
                f"with motion events, frame width is {self.width}"
            )


@dataclass(eq=False)
class GroundTruth:
    fps: float
    n_frames: int
    t_s: np.ndarray
    hr_bpm: np.ndarray
    rr_bpm: np.ndarray
    motion_event_mask: np.ndarray
    skin_mask: np.ndarray
    chest_mask: np.ndarray
    window_len: int = 200
    hop: int = 20

    def to_json(self) -> str:
        return json.dumps(
            {
                "fps": self.fps,
                "n_frames": self.n_frames,
                "window_len": self.window_len,
                "hop": self.hop,
                "t_s": [round(float(v), 6) for v in self.t_s],
                "hr_bpm": [round(float(v), 6) for v in self.hr_bpm],
                "rr_bpm": [round(float(v), 6) for v in self.rr_bpm],
                "motion_event_mask": rle_encode(self.motion_event_mask),
                "skin_mask": rle_encode(self.skin_mask),
                "chest_mask": rle_encode(self.chest_mask),
            },
            indent=1,
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "GroundTruth":
        d = json.loads(text)
        return cls(
            fps=d["fps"],
            n_frames=d["n_frames"],
            t_s=np.asarray(d["t_s"], float),
            hr_bpm=np.asarray(d["hr_bpm"], float),
            rr_bpm=np.asarray(d["rr_bpm"], float),
            motion_event_mask=rle_decode(d["motion_event_mask"]),
            skin_mask=rle_decode(d["skin_mask"]),
            chest_mask=rle_decode(d["chest_mask"]),
            window_len=d["window_len"],
            hop=d["hop"],
        )

    def save(self, path):
        atomic_write_text(path, self.to_json())

    @classmethod
    def load(cls, path) -> "GroundTruth":
        return cls.from_json(Path(path).read_text())


def rle_encode(mask: np.ndarray) -> dict:
    """Run lengths of a boolean array (flattened row-major), starting with a false run."""
    mask = np.asarray(mask, dtype=bool)
    flat = mask.ravel()
    change = np.flatnonzero(np.diff(flat.astype(np.int8))) + 1
    edges = np.concatenate(([0], change, [flat.size]))
    runs = np.diff(edges).tolist()
    if flat.size and flat[0]:
        runs = [0] + runs
    return {"shape": list(mask.shape), "runs": runs}


def rle_decode(obj: dict) -> np.ndarray:
    shape = tuple(obj["shape"])
    values = np.arange(len(obj["runs"])) % 2 == 1
    flat = np.repeat(values, obj["runs"])
    return flat.reshape(shape)


def pulse_waveform(t: np.ndarray, hr_bpm: float) -> np.ndarray:
    """sin(wt) - 0.3 sin(2wt), scaled to unit peak."""
    phase = np.linspace(0, 2 * np.pi, 4097)
    peak = np.max(np.sin(phase) - 0.3 * np.sin(2 * phase))
    w = 2 * np.pi * hr_bpm / 60.0
    return (np.sin(w * t) - 0.3 * np.sin(2 * w * t)) / peak


def breath_direction(posture_deg: float):
    """Unit motion direction times the in-plane projection factor.

    0 deg breathes along x; 90 deg (supine) moves mostly out of plane,
    keeping SUPINE_INPLANE of the amplitude.
    """
    th = math.radians(posture_deg)
    scale = math.sqrt(math.cos(th) ** 2 + (SUPINE_INPLANE * math.sin(th)) ** 2)
    return math.cos(th) * scale, math.sin(th) * scale


def event_offsets(cfg: SceneConfig, t: np.ndarray):
    offset = np.zeros_like(t, dtype=np.float64)
    mask = np.zeros(t.shape, dtype=bool)
    for start, end, disp in cfg.motion_events:
        offset += disp * np.clip((t - start) / (end - start), 0.0, 1.0)
        mask |= (t >= start) & (t < end)
    return offset, mask


def _texture(rng, shape, corr_px, contrast):
    tex = ndimage.gaussian_filter(rng.standard_normal(shape), corr_px, mode="reflect")
    return contrast * tex / tex.std()


@dataclass(eq=False)
class _Layers:
    background: np.ndarray
    body: np.ndarray
    body_alpha: np.ndarray
    chest: np.ndarray
    chest_alpha: np.ndarray
    face: np.ndarray
    face_alpha: np.ndarray


def _build_layers(cfg: SceneConfig) -> _Layers:
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    h, w = cfg.height, cfg.width
    k = cfg.dc_scale
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    background = k * (45.0 + _texture(rng, (h, w), 2.5, 8.0))
    body = k * (85.0 + _texture(rng, (h, w), 1.5, 40.0))
    chest = k * (110.0 + _texture(rng, (h, w), 1.5, 28.0))
    (bx0, by0, bx1, by1), (cx0, cy0, cx1, cy1) = cfg.boxes()
    body_alpha = ((xx >= bx0) & (xx < bx1) & (yy >= by0) & (yy < by1)).astype(float)
    chest_alpha = ((xx >= cx0) & (xx < cx1) & (yy >= cy0) & (yy < cy1)).astype(float)
    fcx, fcy = FACE_CENTER[0] * w, FACE_CENTER[1] * h
    ax, ay = FACE_AXES[0] * w, FACE_AXES[1] * h
    r2 = ((xx + 0.5 - fcx) / ax) ** 2 + ((yy + 0.5 - fcy) / ay) ** 2
    face_alpha = (r2 <= 1.0).astype(float)
    # smooth skin shading, brightest at the centre, plus faint texture
    face = k * (150.0 - 25.0 * np.clip(r2, 0, 1) + _texture(rng, (h, w), 3.0, 3.0))
    if cfg.covered:
        cloth = optics.disc_psf(COVER_DIFFUSION_RADIUS)
        body = COVER_TRANSMISSION * optics.blur_frames(body, cloth)
        chest = COVER_TRANSMISSION * optics.blur_frames(chest, cloth)
    return _Layers(background, body, body_alpha, chest, chest_alpha, face, face_alpha)


def _shift(img, dx, dy):
    if dx == 0 and dy == 0:
        return img
    return ndimage.shift(img, (dy, dx), order=1, mode="nearest")


def render_frames(cfg: SceneConfig):
    """Noise-free real-valued frames (T, H, W) and the scene's ground truth."""
    cfg.validate()
    n = cfg.n_frames
    t = np.arange(n) / cfg.fps
    lay = _build_layers(cfg)
    pulse = cfg.pulse_amplitude * pulse_waveform(t, cfg.hr)
    ux, uy = breath_direction(cfg.posture_deg)
    breath = cfg.breath_amplitude * np.sin(2 * np.pi * cfg.rr / 60.0 * t)
    ev_off, ev_mask = event_offsets(cfg, t)

    frames = np.empty((n, cfg.height, cfg.width))
    cache = {}
    for i in range(n):
        ex = float(ev_off[i])
        if ex not in cache:
            cache = {
                ex: (
                    _shift(lay.body, ex, 0),
                    _shift(lay.body_alpha, ex, 0),
                    _shift(lay.face, ex, 0),
                    _shift(lay.face_alpha, ex, 0),
                )
            }
        body, body_a, face, face_a = cache[ex]
        cx, cy = ex + breath[i] * ux, breath[i] * uy
        chest, chest_a = _shift(lay.chest, cx, cy), _shift(lay.chest_alpha, cx, cy)
        f = lay.background * (1 - body_a) + body * body_a
        f = f * (1 - chest_a) + chest * chest_a
        f = f * (1 - face_a) + face * (1 + pulse[i]) * face_a
        frames[i] = f

    plan = WindowPlan.from_seconds(10.0, 1.0, cfg.fps)
    n_win = plan.count(n)
    centers = (plan.starts(n) + plan.window_len / 2) / cfg.fps
    truth = GroundTruth(
        fps=cfg.fps,
        n_frames=n,
        t_s=centers,
        hr_bpm=np.full(n_win, float(cfg.hr)),
        rr_bpm=np.full(n_win, float(cfg.rr)),
        motion_event_mask=ev_mask,
        skin_mask=lay.face_alpha > 0.5,
        chest_mask=lay.chest_alpha > 0.5,
        window_len=plan.window_len,
        hop=plan.hop,
    )
    return frames, truth


def sensor_noise(cfg: SceneConfig, shape) -> np.ndarray:
    """Gaussian noise with one pre-split RNG stream per frame."""
    out = np.zeros(shape)
    if cfg.noise_sigma == 0:
        return out
    streams = np.random.SeedSequence([cfg.seed, 2]).spawn(shape[0])
    for i, ss in enumerate(streams):
        out[i] = np.random.default_rng(ss).normal(0.0, cfg.noise_sigma, shape[1:])
    return out


def expose(cfg: SceneConfig, frames: np.ndarray, label: str = "") -> VideoClip:
    """Add sensor noise and quantize to the configured bit depth."""
    if cfg.bit_depth == 16:
        frames = frames * 256.0
    noisy = frames + sensor_noise(cfg, frames.shape) * (256.0 if cfg.bit_depth == 16 else 1.0)
    return VideoClip(optics.quantize(noisy, cfg.bit_depth), cfg.fps, cfg.bit_depth, label)


def render_scene(cfg: SceneConfig, label: str = ""):
    """Clear (in-focus) clip and its ground truth."""
    frames, truth = render_frames(cfg)
    return expose(cfg, frames, label), truth


def render_blurred(cfg: SceneConfig, blur_radius: float, label: str = ""):
    """Scene seen through a defocused lens: blur before the sensor adds noise."""
    frames, truth = render_frames(cfg)
    if blur_radius > 0:
        frames = optics.blur_frames(frames, optics.disc_psf(blur_radius))
    return expose(cfg, frames, label), truth


def condition_label(covered: bool, blur_radius: float, posture_deg: float) -> str:
    focus = "clear" if blur_radius == 0 else f"blurry{blur_radius:g}"
    cover = "covered" if covered else "uncovered"
    return f"{focus}-{cover}-p{posture_deg:g}"


def render_condition_suite(base: SceneConfig, postures: int, blur_radii, out_dir, rates=None,
                           covers=(False, True)) -> list[dict]:
    """Render {uncovered, covered} x {clear, *blur_radii} x postures and a manifest.

    Posture orientations are taken in order from (0, 60, 90) degrees.
    ``rates`` optionally gives one (hr, rr) pair per posture; otherwise every
    clip uses the base rates. ``covers`` restricts the bedsheet conditions.
    Returns the manifest entries, also written to
    ``manifest.json``.
    """
    if postures < 1 or postures > len(POSTURES):
        raise ValidationError(f"postures must be in 1..{len(POSTURES)}, got {postures}")
    if rates is None:
        rates = [(base.hr, base.rr)] * postures
    rates = [(float(h), float(r)) for h, r in rates]
    if len(rates) != postures:
        raise ValidationError(f"need {postures} (hr, rr) pairs, got {len(rates)}")
    radii = [0.0] + [float(r) for r in blur_radii if float(r) != 0.0]
    for r in radii:
        if r < 0:
            raise ValidationError(f"negative blur radius {r}")
    base.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for covered in covers:
        for posture, (hr, rr) in zip(POSTURES[:postures], rates):
            cfg = replace(base, covered=covered, posture_deg=posture, hr=hr, rr=rr).validate()
            frames, truth = render_frames(cfg)
            for r in radii:
                label = condition_label(covered, r, posture)
                img = frames if r == 0 else optics.blur_frames(frames, optics.disc_psf(r))
                clip = expose(cfg, img, label)
                clip_path = out_dir / f"{label}.bvr"
                truth_path = out_dir / f"{label}.truth.json"
                write_clip(clip, clip_path)
                truth.save(truth_path)
                entries.append(
                    {
                        "clip": clip_path.name,
                        "truth": truth_path.name,
                        "condition": {"covered": covered, "blur_radius": r, "posture_deg": posture},
                        "label": label,
                        "fps": cfg.fps,
                    }
                )
    write_manifest(entries, out_dir / "manifest.json")
    return entries


def write_manifest(entries, path):
    atomic_write_text(path, json.dumps(entries, indent=1, sort_keys=True))


def load_manifest(path) -> list[dict]:
    """Manifest entries with ``clip`` and ``truth`` resolved against the manifest's folder."""
    path = Path(path)
    entries = json.loads(path.read_text())
    for e in entries:
        for key in ("clip", "truth"):
            p = Path(e[key])
            e[key] = str(p if p.is_absolute() else path.parent / p)
    return entries

