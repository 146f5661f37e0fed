"""Seeded synthetic cohorts of tilted-ellipse disc/cup masks.

Randomness comes from numpy's PCG64 bit generator. Every image draws from
its own stream, ``SeedSequence(seed, spawn_key=(stream, index))``, so any
single image can be regenerated without replaying the others. Streams:
0 = labels, 1 = ground-truth geometry, 2 + k = prediction noise for team k,
1000 + k = likelihoods for team k.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .cls_metrics import ScoreTable
from .errors import InfeasibleConfig, OutOfBounds
from .masks import LabelMask
from .seg_metrics import vertical_diameter

LABEL_STREAM = 0
GEOMETRY_STREAM = 1
NOISE_STREAM = 2
SCORE_STREAM = 1000

_MAX_TRIES = 200
# containment margin for the cup inside the disc, in disc-normalized units
_CUP_MARGIN = 0.98


def rng_for(seed: int, stream: int, index: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(stream, index))))


@dataclass(frozen=True)
class EllipseParams:
    cx: float
    cy: float
    semi_h: float
    semi_v: float
    theta: float = 0.0

    def half_extents(self) -> tuple[float, float]:
        """Half-width and half-height of the tilted ellipse's bounding box."""
        c, s = math.cos(self.theta), math.sin(self.theta)
        hx = math.hypot(self.semi_h * c, self.semi_v * s)
        hy = math.hypot(self.semi_h * s, self.semi_v * c)
        return hx, hy

    def fits(self, width: int, height: int) -> bool:
        hx, hy = self.half_extents()
        return (self.cx - hx >= -0.5 and self.cx + hx <= width - 0.5
                and self.cy - hy >= -0.5 and self.cy + hy <= height - 0.5)


def rasterize_ellipse(e: EllipseParams, width: int, height: int) -> np.ndarray:
    """Pixels whose centers satisfy the tilted-ellipse inequality."""
    if e.semi_h <= 0 or e.semi_v <= 0:
        raise ValueError(f"semi-axes must be positive: {e}")
    if not e.fits(width, height):
        raise OutOfBounds(f"ellipse {e} exceeds a {width}x{height} image")
    hx, hy = e.half_extents()
    c0, c1 = max(0, math.floor(e.cx - hx)), min(width - 1, math.ceil(e.cx + hx))
    r0, r1 = max(0, math.floor(e.cy - hy)), min(height - 1, math.ceil(e.cy + hy))
    dx = np.arange(c0, c1 + 1, dtype=float)[None, :] - e.cx
    dy = np.arange(r0, r1 + 1, dtype=float)[:, None] - e.cy
    c, s = math.cos(e.theta), math.sin(e.theta)
    u = (dx * c + dy * s) / e.semi_h
    v = (-dx * s + dy * c) / e.semi_v
    out = np.zeros((height, width), dtype=bool)
    out[r0:r1 + 1, c0:c1 + 1] = u * u + v * v <= 1.0
    return out


def render(disc: EllipseParams, cup: EllipseParams, width: int, height: int) -> LabelMask:
    return LabelMask.from_regions(rasterize_ellipse(disc, width, height), rasterize_ellipse(cup, width, height))


@dataclass(frozen=True)
class PredictionNoise:
    """Zero-mean Gaussian jitter applied to ellipse parameters (pixels / radians)."""

    center: float = 0.0
    axis: float = 0.0
    tilt: float = 0.0

    @property
    def is_zero(self) -> bool:
        return self.center == 0 and self.axis == 0 and self.tilt == 0


@dataclass(frozen=True)
class TeamSpec:
    name: str
    noise: PredictionNoise = PredictionNoise()
    separation: float = 3.0


def default_teams() -> tuple[TeamSpec, ...]:
    return (
        TeamSpec("noiseless", PredictionNoise(), separation=6.0),
        TeamSpec("team_a", PredictionNoise(center=1.0, axis=1.5, tilt=0.05), separation=4.0),
        TeamSpec("team_b", PredictionNoise(center=1.5, axis=2.0, tilt=0.08), separation=3.0),
        TeamSpec("team_c", PredictionNoise(center=2.0, axis=3.0, tilt=0.10), separation=2.0),
    )


@dataclass(frozen=True)
class SynthConfig:
    n_images: int = 400
    width: int = 160
    height: int = 160
    prevalence: float = 0.10
    exact_stratification: bool = True
    disc_semi_v: tuple[float, float] = (14.0, 24.0)
    disc_aspect: tuple[float, float] = (0.85, 1.0)  # semi_h / semi_v
    tilt: tuple[float, float] = (-0.35, 0.35)
    cup_aspect: tuple[float, float] = (0.95, 1.05)
    cup_offset: float = 0.02  # max cup-center offset, disc-normalized
    vcdr_glaucoma: tuple[float, float] = (0.72, 0.9)
    vcdr_normal: tuple[float, float] = (0.3, 0.6)
    score_noise: float = 1.0
    seed: int = 0
    teams: tuple[TeamSpec, ...] = field(default_factory=default_teams)

    def validate(self):
        def interval(name, lo, hi, low=-math.inf, high=math.inf):
            if not (low <= lo <= hi <= high):
                raise InfeasibleConfig(f"{name} interval ({lo}, {hi}) is empty or outside [{low}, {high}]")

        if self.n_images < 1:
            raise InfeasibleConfig("n_images must be positive")
        if self.width < 1 or self.height < 1:
            raise InfeasibleConfig("image dimensions must be positive")
        if not 0.0 < self.prevalence < 1.0:
            raise InfeasibleConfig(f"prevalence must lie in (0, 1), got {self.prevalence}")
        interval("disc_semi_v", *self.disc_semi_v, low=0.5)
        interval("disc_aspect", *self.disc_aspect, low=1e-3)
        interval("tilt", *self.tilt, low=-math.pi, high=math.pi)
        interval("cup_aspect", *self.cup_aspect, low=1e-3)
        interval("vcdr_glaucoma", *self.vcdr_glaucoma, low=0.0, high=1.0)
        interval("vcdr_normal", *self.vcdr_normal, low=0.0, high=1.0)
        if not 0.0 <= self.cup_offset < _CUP_MARGIN:
            raise InfeasibleConfig(f"cup_offset must lie in [0, {_CUP_MARGIN}), got {self.cup_offset}")
        # the largest disc at its most elongated tilt must fit with its center inside the image
        big = self.disc_semi_v[1] * max(1.0, self.disc_aspect[1])
        if 2 * big + 1 > min(self.width, self.height):
            raise InfeasibleConfig(
                f"discs up to {2 * big:.1f} px across cannot fit a {self.width}x{self.height} image"
            )
        names = [t.name for t in self.teams]
        if len(set(names)) != len(names):
            raise InfeasibleConfig(f"duplicate team names: {names}")
        if any(t.separation < 0 for t in self.teams):
            raise InfeasibleConfig("team separations must be nonnegative")

    @classmethod
    def from_dict(cls, data: dict) -> "SynthConfig":
        data = dict(data)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise InfeasibleConfig(f"unknown config keys: {sorted(unknown)}")
        for key in ("disc_semi_v", "disc_aspect", "tilt", "cup_aspect", "vcdr_glaucoma", "vcdr_normal"):
            if key in data:
                data[key] = tuple(float(v) for v in data[key])
        if "teams" in data:
            teams = []
            for t in data["teams"]:
                t = dict(t)
                noise = PredictionNoise(**t.pop("noise", {}))
                teams.append(TeamSpec(noise=noise, **t))
            data["teams"] = tuple(teams)
        try:
            return cls(**data)
        except TypeError as exc:
            raise InfeasibleConfig(str(exc)) from None

    def to_dict(self) -> dict:
        out = asdict(self)
        out["teams"] = [asdict(t) for t in self.teams]
        for key, value in out.items():
            if isinstance(value, tuple):
                out[key] = list(value)
        return out


@dataclass(frozen=True)
class SynthImage:
    image_id: str
    label: int
    disc: EllipseParams
    cup: EllipseParams
    vcdr: float  # measured on the rendered ground-truth mask


@dataclass(frozen=True)
class SynthCohort:
    config: SynthConfig
    images: tuple[SynthImage, ...]

    @property
    def labels(self) -> dict[str, int]:
        return {im.image_id: im.label for im in self.images}

    def ground_truth(self, image_id_or_index) -> LabelMask:
        im = self._image(image_id_or_index)
        return render(im.disc, im.cup, self.config.width, self.config.height)

    def prediction(self, team: TeamSpec | int, image_id_or_index) -> LabelMask:
        if isinstance(team, int):
            k, team = team, self.config.teams[team]
        else:
            k = self.config.teams.index(team)
        idx = self._index(image_id_or_index)
        im = self.images[idx]
        rng = rng_for(self.config.seed, NOISE_STREAM + k, idx)
        return perturb_prediction((im.disc, im.cup), team.noise, rng, self.config.width, self.config.height)

    def manifest(self) -> list[dict]:
        return [{"image_id": im.image_id, "mask": f"{im.image_id}.bmp", "label": im.label} for im in self.images]

    def _index(self, key) -> int:
        if isinstance(key, (int, np.integer)):
            return int(key)
        return self._ids()[key]

    def _image(self, key) -> SynthImage:
        return self.images[self._index(key)]

    def _ids(self) -> dict[str, int]:
        return {im.image_id: i for i, im in enumerate(self.images)}


def draw_labels(cfg: SynthConfig) -> np.ndarray:
    rng = rng_for(cfg.seed, LABEL_STREAM)
    n = cfg.n_images
    if cfg.exact_stratification:
        n_pos = int(round(cfg.prevalence * n))
        labels = np.zeros(n, dtype=np.int8)
        labels[rng.permutation(n)[:n_pos]] = 1
        return labels
    return (rng.random(n) < cfg.prevalence).astype(np.int8)


def _measured_vcdr(disc_region: np.ndarray, cup_region: np.ndarray) -> float:
    return vertical_diameter(cup_region & disc_region) / vertical_diameter(disc_region)


def _draw_image(cfg: SynthConfig, index: int, label: int) -> SynthImage:
    rng = rng_for(cfg.seed, GEOMETRY_STREAM, index)
    lo, hi = cfg.vcdr_glaucoma if label else cfg.vcdr_normal
    for _ in range(_MAX_TRIES):
        semi_v = rng.uniform(*cfg.disc_semi_v)
        semi_h = semi_v * rng.uniform(*cfg.disc_aspect)
        theta = rng.uniform(*cfg.tilt)
        probe = EllipseParams(0.0, 0.0, semi_h, semi_v, theta)
        hx, hy = probe.half_extents()
        cx = rng.uniform(hx - 0.5, cfg.width - 0.5 - hx)
        cy = rng.uniform(hy - 0.5, cfg.height - 0.5 - hy)
        disc = replace(probe, cx=cx, cy=cy)

        target = rng.uniform(lo, hi)
        aspect = rng.uniform(*cfg.cup_aspect)
        # cup shares the disc tilt; scale k sets cup vertical half-extent = target * disc's
        c, s = math.cos(theta), math.sin(theta)
        k = target * hy / math.hypot(aspect * semi_h * s, semi_v * c)
        offset_r = rng.uniform(0.0, cfg.cup_offset)
        offset_a = rng.uniform(0.0, 2 * math.pi)
        if k * max(aspect, 1.0) + offset_r > _CUP_MARGIN:
            continue
        # offset is expressed in the disc frame, normalized by the disc axes
        du, dv = offset_r * math.cos(offset_a) * semi_h, offset_r * math.sin(offset_a) * semi_v
        cup = EllipseParams(cx + du * c - dv * s, cy + du * s + dv * c, k * aspect * semi_h, k * semi_v, theta)
        if not disc.fits(cfg.width, cfg.height):
            continue
        disc_region = rasterize_ellipse(disc, cfg.width, cfg.height)
        cup_region = rasterize_ellipse(cup, cfg.width, cfg.height)
        if not cup_region.any():
            continue
        measured = _measured_vcdr(disc_region, cup_region)
        if lo <= measured <= hi:
            return SynthImage(f"img{index:05d}", int(label), disc, cup, measured)
    raise InfeasibleConfig(
        f"could not draw image {index} with vCDR in [{lo}, {hi}] after {_MAX_TRIES} attempts; "
        "widen the interval or enlarge the disc size range"
    )


def generate_ground_truth(cfg: SynthConfig) -> SynthCohort:
    """Draw labels and ground-truth geometry. Masks are rendered on demand."""
    cfg.validate()
    labels = draw_labels(cfg)
    images = tuple(_draw_image(cfg, i, int(labels[i])) for i in range(cfg.n_images))
    return SynthCohort(cfg, images)


def _jitter(e: EllipseParams, noise: PredictionNoise, rng: np.random.Generator) -> EllipseParams:
    d = rng.normal(size=5)
    return EllipseParams(
        e.cx + noise.center * d[0],
        e.cy + noise.center * d[1],
        max(0.5, e.semi_h + noise.axis * d[2]),
        max(0.5, e.semi_v + noise.axis * d[3]),
        e.theta + noise.tilt * d[4],
    )


def _clamp_into(e: EllipseParams, width: int, height: int) -> EllipseParams:
    hx, hy = e.half_extents()
    # shrink first if the ellipse cannot fit at all, then shift inside
    scale = min(1.0, (width / 2.0) / max(hx, 1e-12), (height / 2.0) / max(hy, 1e-12)) * (1 - 1e-9)
    if scale < 1.0:
        e = replace(e, semi_h=e.semi_h * scale, semi_v=e.semi_v * scale)
        hx, hy = e.half_extents()
    cx = min(max(e.cx, hx - 0.5), width - 0.5 - hx)
    cy = min(max(e.cy, hy - 0.5), height - 0.5 - hy)
    return replace(e, cx=cx, cy=cy)


def perturb_prediction(gt, noise: PredictionNoise, rng: np.random.Generator, width: int, height: int) -> LabelMask:
    """Simulate a team's mask by jittering the ground-truth disc and cup.

    Both ellipses are clamped into the image; cup pixels falling outside the
    jittered disc are dropped so the cup stays nested. Zero noise reproduces
    the ground truth exactly.
    """
    disc, cup = gt
    if noise.is_zero:
        return render(disc, cup, width, height)
    disc = _clamp_into(_jitter(disc, noise, rng), width, height)
    cup = _clamp_into(_jitter(cup, noise, rng), width, height)
    return render(disc, cup, width, height)


def generate_classifier_scores(labels: dict, separation: float, rng: np.random.Generator,
                               noise_scale: float = 1.0) -> ScoreTable:
    """Likelihoods from a logistic latent shifted up by ``separation`` for positives."""
    if separation < 0:
        raise ValueError("separation must be nonnegative")
    ids = sorted(labels)
    y = np.array([int(labels[i]) for i in ids])
    latent = separation * y + noise_scale * rng.logistic(size=y.size)
    # expit written out so large latents saturate symmetrically
    likelihood = 0.5 * (1.0 + np.tanh(latent / 2.0))
    return ScoreTable(ids, likelihood, y)


def team_scores(cohort: SynthCohort, k: int) -> ScoreTable:
    team = cohort.config.teams[k]
    rng = rng_for(cohort.config.seed, SCORE_STREAM + k)
    return generate_classifier_scores(cohort.labels, team.separation, rng, cohort.config.score_noise)


def true_vcdr_scores(cohort: SynthCohort) -> ScoreTable:
    return ScoreTable([im.image_id for im in cohort.images], [im.vcdr for im in cohort.images],
                      [im.label for im in cohort.images])
