"""End-to-end matching: downsample, cost, inference, refinement, upsample."""
from __future__ import annotations

import dataclasses
import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cost_volume import CostParams, build_cost_volume
from .evaluation import upsample_disparity
from .image_io import downsample_image, effective_levels, to_gray
from .inference import (FullPairParams, InferenceConfig, LocalPairParams, belief_entropy,
                        gibbs_energy, run_inference, wta)
from .lattice import FeatureSpec, build_lattice
from .postprocess import lrc_check, occlusion_fill, weighted_median

log = logging.getLogger(__name__)

MODES = ("lcm", "fcm", "jem")
POST_MODES = ("none", "lrc", "lrc+of+wmf")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # matching cost
    census_window: int = 5
    w_census: float = 1.0
    w_grad: float = 0.4
    tau_grad: float = 16.0
    cost_out_of_view: float | None = None
    # inference
    iterations: int = 5
    omega: float = 0.05
    omega_t: float = 2.0
    lambda1: float = 3.5
    lambda2: float = 3.0
    lambda3: float = 1.0
    mu1: float = 7.0
    mu2: float = 15.0
    beta: float = 0.5
    connectivity: int = 4
    sigma_x: float = 5.0
    sigma_f: float = 55.0
    early_exit_tol: float | None = None
    blur_order: int = 2
    mode: str = "jem"
    # refinement
    post: str = "lrc+of+wmf"
    lrc_tol: float = 1.0
    wmf_window: int = 9
    # workflow
    scale: int = 4
    ndisp: int | None = None
    out: str = "disp.pfm"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.post not in POST_MODES:
            raise ConfigError(f"post must be one of {POST_MODES}, got {self.post!r}")
        if self.scale < 1:
            raise ConfigError("scale must be >= 1")
        if self.ndisp is not None and self.ndisp < 2:
            raise ConfigError("ndisp must be >= 2")

    def cost_params(self) -> CostParams:
        return CostParams(self.census_window, self.w_census, self.w_grad, self.tau_grad,
                          self.cost_out_of_view)

    def inference_config(self) -> InferenceConfig:
        omega = 0.0 if self.mode == "lcm" else self.omega
        omega_t = 0.0 if self.mode == "fcm" else self.omega_t
        return InferenceConfig(
            iterations=self.iterations,
            full=FullPairParams(omega),
            local=LocalPairParams(omega_t, self.lambda1, self.lambda2, self.lambda3,
                                  self.mu1, self.mu2, self.beta, self.connectivity),
            feature=FeatureSpec(self.sigma_x, self.sigma_f),
            early_exit_tol=self.early_exit_tol,
        )

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    # flat key=value text ---------------------------------------------------

    @classmethod
    def from_text(cls, text: str, **overrides) -> "RunConfig":
        values = {}
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in types:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            values[key] = _parse_value(value.strip(), types[key], key)
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    @classmethod
    def from_file(cls, path, **overrides) -> "RunConfig":
        return cls.from_text(Path(path).read_text(), **overrides)

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            lines.append(f"{f.name} = {'none' if value is None else value}")
        return "\n".join(lines) + "\n"


def _parse_value(text, type_name, key):
    optional = "None" in str(type_name)
    if optional and text.lower() == "none":
        return None
    base = str(type_name).split("|")[0].strip()
    try:
        if base == "int":
            return int(text)
        if base == "float":
            return float(text)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {text!r}") from exc
    return text


@dataclass
class MatchResult:
    disparity: np.ndarray          # full resolution, +inf where invalid
    low_res: np.ndarray            # refined disparity at working resolution
    raw: np.ndarray                # WTA before refinement, working resolution
    valid: np.ndarray | None       # LRC mask at working resolution
    levels: int
    timings: dict = field(default_factory=dict)


class StageTimer:
    def __init__(self):
        self.timings = {}

    @contextmanager
    def __call__(self, name):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.timings[name] = self.timings.get(name, 0.0) + time.perf_counter() - t0


class StageError(RuntimeError):
    def __init__(self, stage, exc):
        super().__init__(f"[{stage}] {exc}")
        self.stage = stage
        self.original = exc


def mirror(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(a[:, ::-1])


def _infer(cost, image, icfg, blur_order, trace=None):
    lattice = None
    if icfg.full.omega > 0:
        lattice = build_lattice(image, icfg.feature, blur_order=blur_order)
    return run_inference(cost, image, icfg, lattice=lattice, trace=trace)


def disparity_pair(left, right, levels, cfg: RunConfig, timer=None, debug_dir=None):
    """Left and (when needed) right WTA disparity at working resolution.

    The right-view map reuses the left-reference code path on the mirrored
    pair and mirrors the result back.
    """
    timer = timer or StageTimer()
    cparams = cfg.cost_params()
    icfg = cfg.inference_config()
    gl, gr = to_gray(left), to_gray(right)
    with _stage(timer, "cost"):
        cost_l = build_cost_volume(gl, gr, levels, cparams, "left")
    trace = _trace_writer(debug_dir, cost_l, left, icfg) if debug_dir else None
    with _stage(timer, "inference"):
        disp_l = wta(_infer(cost_l, left, icfg, cfg.blur_order, trace))
    if debug_dir:
        _dump_cost(debug_dir, cost_l)
        trace.close()
    disp_r = None
    if cfg.post != "none":
        with _stage(timer, "cost"):
            cost_r = build_cost_volume(mirror(gr), mirror(gl), levels, cparams, "left")
        with _stage(timer, "inference"):
            disp_r = mirror(wta(_infer(cost_r, mirror(right), icfg, cfg.blur_order)))
    return disp_l, disp_r


def refine(disp_l, disp_r, left, post, cfg: RunConfig, timer=None):
    """Apply a refinement mode; returns (disparity, validity mask or None)."""
    timer = timer or StageTimer()
    if post == "none":
        return disp_l.copy(), None
    with _stage(timer, "post"):
        valid = lrc_check(disp_l, disp_r, cfg.lrc_tol)
        if post == "lrc":
            return np.where(valid, disp_l, np.inf).astype(np.float32), valid
        filled = occlusion_fill(disp_l, valid)
        spec = FeatureSpec(cfg.sigma_x, cfg.sigma_f)
        return weighted_median(filled, left, valid, cfg.wmf_window, spec), valid


def match(left: np.ndarray, right: np.ndarray, ndisp: int, cfg: RunConfig | None = None,
          debug_dir=None) -> MatchResult:
    """Full pipeline on a full-resolution pair."""
    cfg = cfg or RunConfig()
    left, right = np.asarray(left), np.asarray(right)
    if left.shape != right.shape:
        raise StageError("input", ValueError(f"image sizes differ: {left.shape} vs {right.shape}"))
    timer = StageTimer()
    levels = effective_levels(ndisp, cfg.scale)
    with _stage(timer, "downsample"):
        sl = downsample_image(left, cfg.scale)
        sr = downsample_image(right, cfg.scale)
    if debug_dir:
        Path(debug_dir).mkdir(parents=True, exist_ok=True)
    disp_l, disp_r = disparity_pair(sl, sr, levels, cfg, timer, debug_dir)
    refined, valid = refine(disp_l, disp_r, sl, cfg.post, cfg, timer)
    if debug_dir and valid is not None:
        from .image_io import write_mask
        write_mask(Path(debug_dir) / "lrc_mask.png", valid)
    with _stage(timer, "upsample"):
        full = upsample_disparity(refined, cfg.scale, left.shape[:2])
    return MatchResult(full, refined, disp_l, valid, levels, timer.timings)


@contextmanager
def _stage(timer, name):
    try:
        with timer(name):
            yield
    except StageError:
        raise
    except Exception as exc:  # tag the failing stage for the CLI
        raise StageError(name, exc) from exc


def _dump_cost(debug_dir, cost):
    from .image_io import write_pfm
    out = Path(debug_dir) / "cost"
    out.mkdir(parents=True, exist_ok=True)
    for d in range(cost.shape[-1]):
        write_pfm(out / f"cost_{d:03d}.pfm", cost[..., d])


class _TraceFile:
    def __init__(self, path, cost, image, icfg):
        self.fh = open(path, "w")
        self.fh.write("iteration,entropy,max_change,energy\n")
        self.cost, self.image, self.icfg = cost, image, icfg
        self.small = cost.shape[0] * cost.shape[1] <= 10_000

    def __call__(self, it, q, change):
        energy = gibbs_energy(wta(q), self.cost, self.image, self.icfg) if self.small else float("nan")
        self.fh.write(f"{it},{belief_entropy(q):.6g},{change:.6g},{energy:.6g}\n")

    def close(self):
        self.fh.close()


def _trace_writer(debug_dir, cost, image, icfg):
    Path(debug_dir).mkdir(parents=True, exist_ok=True)
    return _TraceFile(Path(debug_dir) / "belief_trace.csv", cost, image, icfg)
