"""Config-driven experiment runs producing a reproducible report bundle.

A run writes into one output directory:

* ``channel.ctf`` (and ``ground_truth.json`` for geometric scenes) when the
  channel is generated,
* ``report.json`` with the ensemble summaries,
* ``spread_cdf.csv`` / ``capacity_cdf.csv`` and ``fingerprint_user<k>.csv``,
* ``manifest.json`` listing every output with its SHA-256, the resolved
  configuration and all seeds. Wall-clock data lives only under the
  manifest's ``metadata`` key, so everything else is byte-identical between
  runs with the same configuration.
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import itertools
import json
import logging
import tempfile
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

from . import __version__
from .capacity import if_capacity
from .channel import DEFAULT_PORTS, DEFAULT_SUBCARRIERS, ArrayKind, EvalParams, NormState
from .ctf import read_channel_file, write_channel_file
from .ensemble import default_threads, run_capacity_ensemble, run_spread_ensemble
from .errors import BadSubset, CellError, MimoEvalError
from .fingerprint import build_fingerprint, fingerprint_overlap
from .models import (
    ArrayGeometry,
    Scenario,
    default_capacity_norm,
    gen_geometric,
    gen_rayleigh,
    ground_truth_json,
    scenario_preset,
)
from .normalization import normalize
from .sage import SageConfig

log = logging.getLogger(__name__)

ANALYSES = ("spread", "capacity", "fingerprint")
MANIFEST = "manifest.json"


class StageError(MimoEvalError):
    """A module error tagged with the pipeline stage that raised it."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[stage={stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


def parse_antennas(spec) -> tuple:
    """``"4,32,128"`` or ``"4:128:4"`` (inclusive range) or a list of ints."""
    if isinstance(spec, (list, tuple)):
        return tuple(int(v) for v in spec)
    text = str(spec).strip()
    if ":" in text:
        parts = [int(p) for p in text.split(":")]
        if len(parts) == 2:
            parts.append(1)
        if len(parts) != 3 or parts[2] <= 0:
            raise MimoEvalError(f"bad antenna range {text!r}; expected a:b:c")
        return tuple(range(parts[0], parts[1] + 1, parts[2]))
    return tuple(int(p) for p in text.split(",") if p.strip())


@dataclass
class ExperimentConfig:
    """Declarative description of one run.

    Exactly one of ``input`` (a CTF1 path) or ``generator`` must be set. A
    generator is ``{"kind": "rayleigh" | "geometric", "scenario", "array",
    "users", "ports", "subcarriers", "seed"}``.
    """

    analyses: list
    out: str
    input: Optional[str] = None
    generator: Optional[dict] = None
    rho_db: float = 10.0
    users: Optional[int] = None
    antennas: tuple = tuple(range(4, 129, 4))
    subsets: int = 2000
    seed: int = 0
    norm: Optional[int] = None
    window: int = 10
    mpcs: int = 200
    energy_fraction: float = 0.9
    cdf_points: Optional[int] = None

    def __post_init__(self):
        self.analyses = [a.lower() for a in self.analyses]
        if not self.analyses:
            raise MimoEvalError("at least one analysis is required")
        bad = [a for a in self.analyses if a not in ANALYSES]
        if bad:
            raise MimoEvalError(f"unknown analyses {bad}; choose from {ANALYSES}")
        if (self.input is None) == (self.generator is None):
            raise MimoEvalError("set exactly one of 'input' or 'generator'")
        if self.input is not None and not Path(self.input).exists():
            raise MimoEvalError(f"input file {self.input} does not exist")
        if self.norm not in (None, 1, 2):
            raise MimoEvalError("norm must be 1 or 2")
        self.antennas = parse_antennas(self.antennas)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        params = data.pop("params", {}) or {}
        fp = data.pop("fingerprint", {}) or {}
        merged = {**params, **fp, **data}
        aliases = {"rho": "rho_db", "num_users": "users", "num_subsets": "subsets",
                   "master_seed": "seed", "normalization": "norm", "energy": "energy_fraction",
                   "window_len": "window", "num_mpcs": "mpcs", "output": "out"}
        for old, new in aliases.items():
            if old in merged:
                merged.setdefault(new, merged.pop(old))
        known = set(cls.__dataclass_fields__)
        unknown = set(merged) - known
        if unknown:
            raise MimoEvalError(f"unknown config keys {sorted(unknown)}")
        return cls(**merged)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["antennas"] = list(self.antennas)
        return d


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _dump_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_channel(cfg: ExperimentConfig, out: Path, written: list):
    if cfg.input is not None:
        return read_channel_file(cfg.input), None
    gen = dict(cfg.generator)
    kind = gen.get("kind", "rayleigh").lower()
    users = int(gen.get("users", cfg.users or 4))
    ports = int(gen.get("ports", DEFAULT_PORTS))
    subcarriers = int(gen.get("subcarriers", DEFAULT_SUBCARRIERS))
    seed = int(gen.get("seed", 0))
    truth = None
    if kind == "rayleigh":
        tensor = gen_rayleigh(users, ports, subcarriers, seed)
    elif kind == "geometric":
        scenario = Scenario(gen.get("scenario", "LOS_COLOCATED"))
        array = ArrayKind(gen.get("array", "ULA"))
        geometry = ArrayGeometry.ula(ports) if array is ArrayKind.ULA else ArrayGeometry.uca()
        tensor, truth = gen_geometric(geometry, scenario_preset(scenario, num_users=users, seed=seed), subcarriers)
    else:
        raise MimoEvalError(f"unknown generator kind {kind!r}")
    write_channel_file(tensor, out / "channel.ctf")
    written.append("channel.ctf")
    if truth is not None:
        _dump_json(ground_truth_json(truth), out / "ground_truth.json")
        written.append("ground_truth.json")
    return tensor, kind


def _normalized(tensor, state: NormState):
    if tensor.norm_state is NormState.RAW:
        return normalize(tensor, state)
    if tensor.norm_state is not state:
        raise MimoEvalError(f"input is stored as {tensor.norm_state.value}; {state.value} required")
    return tensor


def _capacity_norm(cfg: ExperimentConfig, tensor) -> NormState:
    if cfg.norm is not None:
        return NormState.NORM1 if cfg.norm == 1 else NormState.NORM2
    if tensor.norm_state is not NormState.RAW:
        return tensor.norm_state
    if cfg.generator and cfg.generator.get("kind", "rayleigh").lower() == "geometric":
        return default_capacity_norm(cfg.generator.get("scenario", "LOS_COLOCATED"))
    return NormState.NORM2


def run_experiment(cfg: ExperimentConfig, threads: Optional[int] = None) -> dict:
    """Execute ``cfg`` and write the report bundle; returns the manifest.

    On failure every output written so far is removed, a manifest with
    ``status: "failed"`` and the failing stage is left behind, and a
    :class:`StageError` is raised.
    """
    threads = default_threads() if threads is None else threads
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    written: list = []
    stage = "load"
    report: dict = {}
    try:
        tensor, _ = _load_channel(cfg, out, written)
        stage = "validate"
        users = cfg.users if cfg.users is not None else tensor.num_users
        if users != tensor.num_users:
            raise MimoEvalError(f"config asks for {users} users, channel has {tensor.num_users}")
        bad = [m for m in cfg.antennas if m > tensor.num_ports]
        if bad and {"spread", "capacity"} & set(cfg.analyses):
            raise BadSubset(f"antenna counts {bad} exceed the {tensor.num_ports} available ports")
        small = [m for m in cfg.antennas if m < users]
        if small and {"spread", "capacity"} & set(cfg.analyses):
            raise MimoEvalError(f"antenna counts {small} are below K={users}")
        rho = 10.0 ** (cfg.rho_db / 10.0)

        log.info("channel %s loaded, running %s", tensor.shape, ", ".join(cfg.analyses))
        if "spread" in cfg.analyses:
            stage = "spread"
            params = EvalParams(rho=rho, num_users=users, antenna_counts=cfg.antennas,
                                num_subsets=cfg.subsets, master_seed=cfg.seed,
                                normalization=NormState.NORM1)
            rep = run_spread_ensemble(_normalized(tensor, NormState.NORM1), params, threads=threads)
            report["spread"] = rep.to_dict()
            rep.write_cdf_csv(out / "spread_cdf.csv", cfg.cdf_points)
            written.append("spread_cdf.csv")

        if "capacity" in cfg.analyses:
            stage = "capacity"
            state = _capacity_norm(cfg, tensor)
            params = EvalParams(rho=rho, num_users=users, antenna_counts=cfg.antennas,
                                num_subsets=cfg.subsets, master_seed=cfg.seed, normalization=state)
            rep = run_capacity_ensemble(_normalized(tensor, state), params, threads=threads)
            report["capacity"] = rep.to_dict()
            report["capacity"]["if_capacity"] = if_capacity(users, rho)
            rep.write_cdf_csv(out / "capacity_cdf.csv", cfg.cdf_points)
            written.append("capacity_cdf.csv")

        if "fingerprint" in cfg.analyses:
            stage = "fingerprint"
            sage_cfg = SageConfig(window_len=cfg.window, num_mpcs=cfg.mpcs)
            maps = []
            for u in range(users):
                fp = build_fingerprint(tensor, u, sage_cfg, cfg.energy_fraction, threads=threads)
                name = f"fingerprint_user{u}.csv"
                fp.write_csv(out / name)
                written.append(name)
                maps.append(fp)
            overlap = [[1.0] * users for _ in range(users)]
            for i, j in itertools.combinations(range(users), 2):
                overlap[i][j] = overlap[j][i] = fingerprint_overlap(maps[i], maps[j])
            report["fingerprint"] = {
                "window": cfg.window,
                "mpcs": cfg.mpcs,
                "energy_fraction": cfg.energy_fraction,
                "users": [{"user": u, "covered_fraction": m.covered_fraction(),
                           "selected_cells": int(m.selected.sum())} for u, m in enumerate(maps)],
                "overlap": overlap,
            }

        stage = "report"
        _dump_json(report, out / "report.json")
        written.append("report.json")
    except Exception as exc:
        for name in written:
            try:
                (out / name).unlink()
            except FileNotFoundError:
                pass
        err = {"stage": stage, "type": type(exc).__name__, "message": str(exc)}
        if isinstance(exc, CellError):
            err.update(M=exc.M, subset=exc.subset, subcarrier=exc.subcarrier)
        manifest = _manifest(cfg, [], out, status="failed", threads=threads, error=err)
        _dump_json(manifest, out / MANIFEST)
        raise StageError(stage, exc) from exc

    manifest = _manifest(cfg, written, out, status="complete", threads=threads)
    _dump_json(manifest, out / MANIFEST)
    return manifest


def _manifest(cfg, written, out: Path, status: str, threads: int, error=None) -> dict:
    seeds = {"master_seed": cfg.seed}
    if cfg.generator is not None:
        seeds["generator_seed"] = int(cfg.generator.get("seed", 0))
    config = cfg.to_dict()
    # the output location is run-specific, keep it out of the reproducible part
    config.pop("out")
    manifest = {
        "status": status,
        "config": config,
        "seeds": seeds,
        "outputs": [{"path": name, "sha256": sha256_file(out / name), "bytes": (out / name).stat().st_size}
                    for name in sorted(written)],
        "metadata": {
            "created_utc": _dt.datetime.now(_dt.timezone.utc).isoformat(),
            "package_version": __version__,
            "threads": threads,
            "out": str(out),
        },
    }
    if cfg.input is not None:
        manifest["input_sha256"] = sha256_file(cfg.input)
    if error is not None:
        manifest["error"] = error
    return manifest


def verify_bundle(path, rerun: bool = False, threads: Optional[int] = None) -> list:
    """Check a bundle's checksums; with ``rerun`` also recompute it from its config.

    Returns a list of human-readable problems (empty when everything matches).
    """
    path = Path(path)
    manifest_path = path / MANIFEST if path.is_dir() else path
    root = manifest_path.parent
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    problems = []
    if manifest.get("status") != "complete":
        problems.append(f"bundle status is {manifest.get('status')!r}")
    for entry in manifest.get("outputs", []):
        f = root / entry["path"]
        if not f.exists():
            problems.append(f"missing output {entry['path']}")
        elif sha256_file(f) != entry["sha256"]:
            problems.append(f"checksum mismatch for {entry['path']}")
    if rerun and not problems:
        cfg_dict = dict(manifest["config"])
        with tempfile.TemporaryDirectory() as tmp:
            cfg_dict["out"] = tmp
            if manifest.get("input_sha256") and sha256_file(cfg_dict["input"]) != manifest["input_sha256"]:
                return problems + ["input channel file changed since the bundle was written"]
            again = run_experiment(ExperimentConfig.from_dict(cfg_dict), threads=threads)
            want = {e["path"]: e["sha256"] for e in manifest["outputs"]}
            got = {e["path"]: e["sha256"] for e in again["outputs"]}
            for name in sorted(set(want) | set(got)):
                if want.get(name) != got.get(name):
                    problems.append(f"re-run differs for {name}")
    return problems
