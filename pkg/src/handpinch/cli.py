"""Command-line runs: enumerate workspaces, detect pinch configurations, export reports.

Exit codes: 0 success, 2 configuration error, 3 runtime error.  Errors are a
single ``handpinch: error: <kind>: <message>`` line on stderr; progress goes
to stderr as well, never into report files.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from . import __version__
from .align_detector import AlignmentTolerance, detect_alignment, detect_alignment_no_thumb
from .hand_model import NON_THUMB, build_case
from .lateral_detector import SpanGrid, detect_lateral
from .pair_index import PairStrategy
from .reporting import (PAPER_EPS_SWEEP_PCT, ComparisonRow, DetectionReport, TrendFlag,
                        cloud_extends, compare_report, near_far_trend, resolution_trend, summarize, sweep,
                        write_comparison_csv, write_lateral_histogram_csv, write_report_json,
                        write_summary_csv, write_sweep_csv, write_tip_histogram_csv,
                        write_tip_share_csv, write_trend_csv)
from .tip_detector import detect_tip
from .workspace import (DEFAULT_SAMPLING, SAMPLING_CONVENTIONS, SampleSet, enumerate_samples,
                        grid, load_samples, save_samples)

DETECTORS = ("align", "align-no-thumb", "lateral", "tip")
CACHE_ENV = "HANDPINCH_CACHE"
EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    cases: List[int] = field(default_factory=lambda: [1, 2, 3, 4])
    detectors: List[str] = field(default_factory=lambda: list(DETECTORS))
    resolution: int = 1
    epsilon: float = 1e-5
    delta: str = "bucket"
    sampling: str = DEFAULT_SAMPLING
    strategy: str = "binned"
    strict_overlap: bool = True
    span_step: float = 0.1
    lateral_max: float = 1.0
    tip_max: float = 1.2
    contact_step: float = 0.1
    workers: int = 1
    out: str = "handpinch-out"
    cache: Optional[str] = None

    def validate(self) -> "RunConfig":
        if not self.cases or any(c not in (1, 2, 3, 4) for c in self.cases):
            raise ConfigError(f"cases must be drawn from 1..4, got {self.cases}")
        bad = [d for d in self.detectors if d not in DETECTORS]
        if not self.detectors or bad:
            raise ConfigError(f"unknown detector(s) {bad or self.detectors}")
        if self.resolution not in (1, 2, 3):
            raise ConfigError(f"resolution must be 1, 2 or 3, got {self.resolution}")
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise ConfigError(f"epsilon must be a positive number, got {self.epsilon}")
        if self.sampling not in SAMPLING_CONVENTIONS:
            raise ConfigError(f"unknown sampling convention {self.sampling!r}")
        for name in ("span_step", "lateral_max", "tip_max"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")
        try:
            PairStrategy.parse(self.strategy)
            self.span_grid("lateral")
            self.span_grid("tip")
        except ValueError as e:
            raise ConfigError(str(e)) from None
        if not 0 < self.contact_step <= 1:
            raise ConfigError("contact_step must lie in (0, 1]")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        return self

    def span_grid(self, detector: str) -> SpanGrid:
        stop = self.lateral_max if detector == "lateral" else self.tip_max
        return SpanGrid.uniform(stop, self.span_step, self.delta, eps=self.epsilon)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        data = data.get("config", data)  # a manifest is accepted as a config file
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config key(s) {sorted(unknown)}")
        return cls(**data)


# ---------------------------------------------------------------------------
# Sample-set cache
# ---------------------------------------------------------------------------

def _progress(msg: str) -> None:
    print(f"[handpinch] {msg}", file=sys.stderr, flush=True)


class SampleCache:
    """Enumerated sample sets, in memory and optionally on disk.

    Disk entries are keyed by a hash of the model, finger and grid so a
    changed model never reuses a stale file.
    """

    def __init__(self, directory: Optional[str], workers: int = 1):
        self.directory = Path(directory) if directory else None
        self.workers = workers
        self._mem: Dict[tuple, SampleSet] = {}

    def key(self, model, finger: str, grid_, phalanges: bool) -> str:
        blob = json.dumps({"model": model.key, "finger": finger, "grid": grid_.describe(),
                           "phalanges": phalanges}, sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:24]

    def get(self, model, finger: str, resolution: int, sampling: str,
            phalanges: bool = False) -> SampleSet:
        g = grid(model.ranges[finger], resolution, sampling)
        k = self.key(model, finger, g, phalanges)
        # a set carrying phalanx points also serves requests without them
        for ph in {phalanges, True}:
            hit = self._mem.get(self.key(model, finger, g, ph))
            if hit is not None:
                return hit
        path = self.directory / f"{finger}-{k}.hps" if self.directory else None
        if path is not None and path.exists():
            s = load_samples(path)
        else:
            _progress(f"enumerating case {int(model.case)} {finger} ({g.size:,} configurations)")
            s = enumerate_samples(model, finger, g, include_phalanges=phalanges,
                                  workers=self.workers)
            if path is not None:
                path.parent.mkdir(parents=True, exist_ok=True)
                save_samples(s, path)
        self._mem[k] = s
        return s


# ---------------------------------------------------------------------------
# Runs
# ---------------------------------------------------------------------------

@dataclass
class DetectorRun:
    case: int
    detector: str
    report: DetectionReport
    sets: object
    histograms: list = field(default_factory=list)


def run_detector(cfg: RunConfig, case: int, detector: str, cache: SampleCache) -> DetectorRun:
    model = build_case(case)
    tol = AlignmentTolerance(cfg.epsilon, cfg.strict_overlap)
    get = lambda f, ph=False: cache.get(model, f, cfg.resolution, cfg.sampling, ph)
    t0 = time.perf_counter()
    hists = []
    delta, mode = None, "none"
    if detector == "align":
        sets = detect_alignment(get("thumb"), {f: get(f) for f in NON_THUMB}, tol,
                                cfg.strategy, cfg.workers)
    elif detector == "align-no-thumb":
        sets = detect_alignment_no_thumb(get("index"), {f: get(f) for f in NON_THUMB[1:]},
                                         tol, cfg.strategy, cfg.workers)
    elif detector == "lateral":
        spans = cfg.span_grid("lateral")
        res = detect_lateral(get("thumb"), get("index", True), spans, cfg.contact_step,
                             cfg.strategy, cfg.workers)
        sets, hists, delta, mode = res.sets, [res.histogram], spans.delta, spans.mode
    else:
        spans = cfg.span_grid("tip")
        res = detect_tip(get("thumb"), {f: get(f) for f in NON_THUMB}, spans,
                         cfg.strategy, cfg.workers)
        sets, delta, mode = res.sets, spans.delta, spans.mode
        hists = [res.histograms[f] for f in NON_THUMB]
    wall = time.perf_counter() - t0
    rep = summarize(sets, case, cfg.resolution, cfg.epsilon, mode, cfg.sampling, delta,
                    hists, wall)
    _progress(f"case {case} {detector}: {wall:.1f}s")
    return DetectorRun(case, detector, rep, sets, hists)


class OutputTracker:
    """Records files written so a failed run can remove them."""

    def __init__(self, out: Path):
        self.out = out
        self.files: List[Path] = []
        self.created_dir = not out.exists()

    def path(self, name: str) -> Path:
        p = self.out / name
        self.files.append(p)
        return p

    def rollback(self) -> None:
        for p in reversed(self.files):
            try:
                p.unlink()
            except FileNotFoundError:
                pass
        if self.created_dir:
            try:
                for d in sorted(self.out.rglob("*"), reverse=True):
                    if d.is_dir():
                        d.rmdir()
                self.out.rmdir()
            except OSError:
                pass


def _report_json(rep: DetectionReport, path: Path) -> None:
    # wall time lives in the manifest so report files stay byte-identical
    write_report_json(replace(rep, wall_time=0.0), path)


def _write_run_outputs(runs: Sequence[DetectorRun], tr: OutputTracker) -> None:
    write_summary_csv([r.report for r in runs], tr.path("summary.csv"))
    for r in runs:
        stem = f"case{r.case}_{r.detector}"
        _report_json(r.report, tr.path(f"reports/{stem}.json"))
        if r.detector == "lateral":
            write_lateral_histogram_csv(r.histograms[0], tr.path(f"{stem}_spans.csv"))
        elif r.detector == "tip":
            write_tip_histogram_csv(r.histograms, tr.path(f"{stem}_spans.csv"))
            write_tip_share_csv(r.histograms, r.report.detected, tr.path(f"{stem}_shares.csv"))


def _manifest(command: str, configs: List[dict], runs: Sequence[DetectorRun], started: float,
              extra: Optional[dict] = None) -> dict:
    m = {"artifact": "handpinch", "version": __version__, "command": command,
         "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
         "wall_time_s": round(time.perf_counter() - started, 3),
         "config": configs[0] if len(configs) == 1 else None, "runs": configs,
         "timings": [{"case": r.case, "detector": r.detector,
                      "wall_time_s": round(r.report.wall_time, 3)} for r in runs]}
    if extra:
        m.update(extra)
    return m


def _write_json(obj, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def execute(cfg: RunConfig) -> List[DetectorRun]:
    cfg.validate()
    out = Path(cfg.out)
    tr = OutputTracker(out)
    started = time.perf_counter()
    try:
        out.mkdir(parents=True, exist_ok=True)
        runs = []
        for case in cfg.cases:
            cache = SampleCache(cfg.cache, cfg.workers)
            for det in cfg.detectors:
                runs.append(run_detector(cfg, case, det, cache))
        _write_run_outputs(runs, tr)
        _write_json(_manifest("run", [cfg.to_dict()], runs, started), tr.path("manifest.json"))
        return runs
    except BaseException:
        tr.rollback()
        raise


# ---------------------------------------------------------------------------
# Paper reproduction bundle
# ---------------------------------------------------------------------------

def reproduce(out: str, fast: bool = False, workers: int = 1, strategy: str = "binned",
              cache: Optional[str] = None, cases: Sequence[int] = (1, 2, 3, 4),
              sweep_cases: Sequence[int] = (4, 1)) -> dict:
    """Run the published matrix, compare per cell and flag qualitative trends.

    Fast mode stays at resolution 1 (lateral and tip); the resolution-3
    alignment tables are then listed as not run.  A failing run is recorded
    and the remaining runs continue.
    """
    outp = Path(out)
    outp.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    configs, runs, failures = [], [], []
    comparison, flags = [], []
    base = RunConfig(workers=workers, strategy=strategy, cache=cache, out=str(outp))

    def attempt(cfg: RunConfig, case: int, det: str, sc: SampleCache) -> Optional[DetectorRun]:
        configs.append({**cfg.to_dict(), "cases": [case], "detectors": [det]})
        try:
            r = run_detector(cfg, case, det, sc)
        except (MemoryError, RuntimeError, OSError) as e:
            failures.append({"case": case, "detector": det, "error": f"{type(e).__name__}: {e}"})
            _progress(f"case {case} {det} failed: {e}")
            return None
        runs.append(r)
        return r

    by_mode: Dict[str, List[DetectorRun]] = {"bucket": [], "strict": []}
    for case in cases:
        sc = SampleCache(cache, workers)
        for mode in ("bucket", "strict"):
            cfg = replace(base, delta=mode, resolution=1)
            for det in ("lateral", "tip"):
                r = attempt(cfg, case, det, sc)
                if r is not None:
                    by_mode[mode].append(r)
    for mode, rs in by_mode.items():
        done = {(r.case, r.detector): r for r in rs}
        for case in cases:
            for det in ("lateral", "tip"):
                for row in compare_report(done.get((case, det), None) and
                                          done[(case, det)].report, det, case):
                    row.table = f"{det}-{mode}"
                    comparison.append(row)
            tip = done.get((case, "tip"))
            if tip is not None and mode == "bucket":
                flags.append(near_far_trend(tip.histograms, case))
        lat0 = [int(r.histograms[0].detected_pairs[0]) for r in rs if r.detector == "lateral"]
        if mode == "strict":
            flags.append(TrendFlag("lateral-strict-zero-span-empty", all(x == 0 for x in lat0),
                                   f"pairs at span 0 per case: {lat0}"))
    write_summary_csv([r.report for r in by_mode["bucket"]], outp / "res1_bucket_summary.csv")
    write_summary_csv([r.report for r in by_mode["strict"]], outp / "res1_strict_summary.csv")
    for r in by_mode["bucket"] + by_mode["strict"]:
        stem = f"case{r.case}_{r.detector}_{r.report.delta_mode}"
        if r.detector == "lateral":
            write_lateral_histogram_csv(r.histograms[0], outp / f"{stem}_spans.csv")
        else:
            write_tip_histogram_csv(r.histograms, outp / f"{stem}_spans.csv")
            write_tip_share_csv(r.histograms, r.report.detected, outp / f"{stem}_shares.csv")

    # finger clouds: the 4-DoF fingers should reach beyond the 3-DoF ones
    sc1 = SampleCache(cache, workers)
    m1, m3 = build_case(1), build_case(3)
    for f in NON_THUMB:
        flags.append(cloud_extends(sc1.get(m1, f, 1, DEFAULT_SAMPLING).p_tip,
                                   sc1.get(m3, f, 1, DEFAULT_SAMPLING).p_tip,
                                   f"case3-extends-case1-{f}"))

    align_runs = []
    if fast:
        for case in cases:
            for det in ("align", "align-no-thumb"):
                for row in compare_report(None, det, case):
                    comparison.append(row)
        notes = "alignment tables require resolution 3 (skipped in fast mode)"
    else:
        notes = ""
        for case in cases:
            sc = SampleCache(cache, workers)
            cfg = replace(base, resolution=3)
            for det in ("align", "align-no-thumb"):
                r = attempt(cfg, case, det, sc)
                if r is not None:
                    align_runs.append(r)
                comparison.extend(compare_report(r and r.report, det, case))
        write_summary_csv([r.report for r in align_runs], outp / "res3_align_summary.csv")
        for case in sweep_cases:
            sc = SampleCache(cache, workers)

            def by_eps(eps, case=case, sc=sc):
                cfg = replace(base, resolution=3, epsilon=eps)
                prev = next((r for r in align_runs if r.case == case and r.detector == "align"
                             and r.report.epsilon == eps), None)
                r = prev or attempt(cfg, case, "align", sc)
                if r is None:
                    raise RuntimeError(f"case {case} align at eps={eps} failed")
                return r.report, r.sets
            try:
                res = sweep(by_eps, [1e-3, 1e-4, 1e-5], "epsilon")
            except RuntimeError as e:
                failures.append({"case": case, "detector": "align-eps-sweep", "error": str(e)})
                continue
            write_sweep_csv(res, outp / f"case{case}_eps_sweep.csv")
            for f in res.reports[0].fingers:
                flags.append(TrendFlag(f"case{case}-eps-nested-{f}", res.nested.get(f, False),
                                       " -> ".join(f"{x:.2f}" for x in res.series(f))))
            for eps, rep in zip(res.values, res.reports):
                pt, pm = PAPER_EPS_SWEEP_PCT[eps]
                for name, paper, prod in (("thumb", pt, rep.ratio_float("thumb")),
                                          ("finger-mean", pm, rep.mean_ratio())):
                    comparison.append(ComparisonRow(f"eps-sweep-{eps:g}", case, name, paper,
                                                    prod, prod - paper, 3.0, "pp",
                                                    abs(prod - paper) <= 3.0))
        sc = SampleCache(cache, workers)

        def by_res(res_level, sc=sc):
            cfg = replace(base, resolution=int(res_level))
            prev = next((r for r in align_runs if r.case == 4 and r.detector == "align"
                         and r.report.resolution == res_level and r.report.epsilon == 1e-5), None)
            r = prev or attempt(cfg, 4, "align", sc)
            if r is None:
                raise RuntimeError(f"case 4 align at resolution {res_level} failed")
            return r.report
        try:
            rs = sweep(by_res, [1, 2, 3], "resolution")
            write_sweep_csv(rs, outp / "case4_resolution_sweep.csv")
            flags.extend(resolution_trend(rs))
        except RuntimeError as e:
            failures.append({"case": 4, "detector": "align-res-sweep", "error": str(e)})

    write_comparison_csv(comparison, outp / "comparison.csv")
    write_trend_csv(flags, outp / "trends.csv")
    manifest = _manifest("reproduce", configs, runs, started,
                         {"fast": fast, "failures": failures, "notes": notes})
    _write_json(manifest, outp / "manifest.json")
    return manifest


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _cases(text: str) -> List[int]:
    if text == "all":
        return [1, 2, 3, 4]
    try:
        return [int(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid case {text!r}") from None


def _detectors(text: str) -> List[str]:
    return list(DETECTORS) if text == "all" else text.split(",")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="handpinch", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"handpinch {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="detect pinch configurations and export reports")
    r.add_argument("--case", type=_cases, default=None, help="1..4, comma list or all")
    r.add_argument("--detector", type=_detectors, default=None,
                   help="align, align-no-thumb, lateral, tip, comma list or all")
    r.add_argument("--res", type=int, choices=(1, 2, 3), default=None)
    r.add_argument("--epsilon", type=float, default=None)
    r.add_argument("--delta", default=None, help="strict, bucket or a number")
    r.add_argument("--sampling", choices=SAMPLING_CONVENTIONS, default=None)
    r.add_argument("--strategy", choices=("naive", "binned"), default=None)
    r.add_argument("--overlap", choices=("strict", "inclusive"), default=None,
                   help="accept zero-length overlaps with inclusive")
    r.add_argument("--span-step", type=float, default=None)
    r.add_argument("--lateral-max", type=float, default=None)
    r.add_argument("--tip-max", type=float, default=None)
    r.add_argument("--contact-step", type=float, default=None)
    r.add_argument("--workers", type=int, default=None)
    r.add_argument("--out", default=None)
    r.add_argument("--cache", default=None, help=f"sample-set cache dir (default ${CACHE_ENV})")
    r.add_argument("--config", default=None, help="JSON config; its values override flags")

    q = sub.add_parser("reproduce", help="run the published comparison matrix")
    q.add_argument("--out", default="handpinch-reproduce")
    q.add_argument("--fast", action="store_true", help="resolution 1 only")
    q.add_argument("--workers", type=int, default=1)
    q.add_argument("--strategy", choices=("naive", "binned"), default="binned")
    q.add_argument("--cache", default=None)
    return p


_FLAG_FIELDS = {"case": "cases", "detector": "detectors", "res": "resolution",
                "epsilon": "epsilon", "delta": "delta", "sampling": "sampling",
                "strategy": "strategy", "span_step": "span_step", "lateral_max": "lateral_max",
                "tip_max": "tip_max", "contact_step": "contact_step", "workers": "workers",
                "out": "out", "cache": "cache"}


def config_from_args(args: argparse.Namespace) -> RunConfig:
    values = {}
    for flag, name in _FLAG_FIELDS.items():
        v = getattr(args, flag)
        if v is not None:
            values[name] = v
    if args.overlap is not None:
        values["strict_overlap"] = args.overlap == "strict"
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {args.config}: {e}") from None
        try:
            values.update(RunConfig.from_dict(data).to_dict() if "config" in data
                          else {k: v for k, v in data.items()})
        except TypeError as e:
            raise ConfigError(str(e)) from None
    if values.get("cache") is None and os.environ.get(CACHE_ENV):
        values["cache"] = os.environ[CACHE_ENV]
    try:
        cfg = RunConfig.from_dict(values)
    except TypeError as e:
        raise ConfigError(str(e)) from None
    return cfg.validate()


def _fail(kind: str, msg: str, code: int) -> int:
    print(f"handpinch: error: {kind}: {' '.join(str(msg).split())}", file=sys.stderr)
    return code


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command == "run":
            cfg = config_from_args(args)
        elif args.workers < 1:
            raise ConfigError("workers must be >= 1")
    except ConfigError as e:
        return _fail("config", e, EXIT_CONFIG)
    try:
        if args.command == "run":
            execute(cfg)
        else:
            cache = args.cache or os.environ.get(CACHE_ENV)
            reproduce(args.out, args.fast, args.workers, args.strategy, cache)
    except ConfigError as e:
        return _fail("config", e, EXIT_CONFIG)
    except KeyboardInterrupt:
        return _fail("runtime", "interrupted", EXIT_RUNTIME)
    except Exception as e:  # surfaced as one machine-parsable line
        return _fail("runtime", f"{type(e).__name__}: {e}", EXIT_RUNTIME)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
