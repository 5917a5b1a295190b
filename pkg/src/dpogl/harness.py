"""Experiment harness: JSON configs, the train/account pipeline, artifacts.

A run writes, inside the configured output directory:

  metrics.csv            epoch,avg_train_loss,avg_test_acc     (training runs)
  pwp.csv                epoch,worker,eps_rdp,alpha_star,eps_dp
  heatmap_epoch_{t}.csv  n,i,eps  with a 'trusted' sentinel for undefined pairs
  manifest.json          config hash, effective seed, emitted file list

Floats are serialized with 17 significant digits and the manifest carries no
timestamps, so rerunning the same config reproduces every file byte for byte.
Accountant precondition failures (sigma = 0, degradation bound on a topology
that is not a string, ...) disable the accounting outputs only; training
outputs are still emitted and the manifest records the reason under
"accounting_error".
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import accountant
from .data import (Dataset, dirichlet_partition, load_csv, make_synthetic,
                   stratified_split, worker_labels)
from .models import smoothness_bound
from .topology import STRUCTURE_KINDS, GroupStructure, generate_structure
from .trainer import HyperParams, run_training


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the bad field."""


_REQUIRED = object()

_TOP_LEVEL_KEYS = frozenset({
    "seed", "algorithm", "threat_model", "epochs", "inter_group_period",
    "local_iterations", "learning_rate", "batch_size", "clip", "sigma",
    "participation", "delta", "variant", "bound", "alpha_grid",
    "heatmap_epochs", "output_dir", "structure", "data",
})

BOUND_METHODS = ("delay", "degradation")


def _pluck(raw: dict, key: str, default=_REQUIRED):
    if key not in raw:
        if default is _REQUIRED:
            raise ConfigError(f"missing required field '{key}'")
        return default
    return raw[key]


def _as_int(value, label: str, minimum: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"field '{label}' must be an integer")
    if minimum is not None and value < minimum:
        raise ConfigError(f"field '{label}' must be >= {minimum}")
    return value


def _as_number(value, label: str, minimum: float | None = None,
               exclusive: bool = False, maximum: float | None = None,
               allow_inf: bool = False) -> float:
    if value == "inf" and allow_inf:
        return math.inf
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"field '{label}' must be a number")
    v = float(value)
    if math.isnan(v):
        raise ConfigError(f"field '{label}' must not be NaN")
    if math.isinf(v) and not allow_inf:
        raise ConfigError(f"field '{label}' must be finite")
    if minimum is not None:
        if exclusive and v <= minimum:
            raise ConfigError(f"field '{label}' must be > {minimum}")
        if not exclusive and v < minimum:
            raise ConfigError(f"field '{label}' must be >= {minimum}")
    if maximum is not None and v > maximum:
        raise ConfigError(f"field '{label}' must be <= {maximum}")
    return v


def _as_choice(value, label: str, choices) -> str:
    if not isinstance(value, str) or value not in choices:
        raise ConfigError(f"field '{label}' must be one of {sorted(choices)}")
    return value


def _per_group(value, label: str, element):
    """A scalar or a per-group list; lengths are checked later against M."""
    if isinstance(value, list):
        if not value:
            raise ConfigError(f"field '{label}' must not be an empty list")
        return tuple(element(v, f"{label}[{k}]") for k, v in enumerate(value))
    return element(value, label)


def _reject_unknown(raw: dict, allowed, where: str = "") -> None:
    unknown = sorted(set(raw) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown field '{where}{unknown[0]}'")


def _parse_structure(raw) -> dict:
    if not isinstance(raw, dict):
        raise ConfigError("field 'structure' must be an object")
    if "members_of_group" in raw:
        _reject_unknown(raw, {"members_of_group", "num_workers", "kind"},
                        "structure.")
        num_workers = _as_int(_pluck(raw, "num_workers"),
                              "structure.num_workers", minimum=1)
        members = raw["members_of_group"]
        if (not isinstance(members, list) or not members
                or not all(isinstance(g, list) for g in members)):
            raise ConfigError("field 'structure.members_of_group' must be a "
                              "non-empty list of worker-id lists")
        groups = [[_as_int(w, f"structure.members_of_group[{m}][{j}]", 0)
                   for j, w in enumerate(g)] for m, g in enumerate(members)]
        kind = raw.get("kind")
        if kind is not None and not isinstance(kind, str):
            raise ConfigError("field 'structure.kind' must be a string")
        try:
            built = GroupStructure(num_workers, groups, kind=kind)
        except ValueError as exc:
            raise ConfigError(f"structure: {exc}") from exc
        return {"kind": kind, "num_workers": num_workers,
                "members_of_group": [sorted(g) for g in built.members_of_group]}
    _reject_unknown(raw, {"kind", "num_workers", "num_groups"}, "structure.")
    kind = _as_choice(_pluck(raw, "kind"), "structure.kind", STRUCTURE_KINDS)
    num_workers = _as_int(_pluck(raw, "num_workers"), "structure.num_workers",
                          minimum=1)
    num_groups = _as_int(_pluck(raw, "num_groups"), "structure.num_groups",
                         minimum=1)
    if kind != "LB":  # LB membership depends on the realized data partition
        try:
            generate_structure(kind, num_workers, num_groups)
        except ValueError as exc:
            raise ConfigError(f"structure: {exc}") from exc
    return {"kind": kind, "num_workers": num_workers, "num_groups": num_groups}


def _parse_data(raw) -> dict:
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("field 'data' must be an object")
    common = {
        "test_fraction": _as_number(_pluck(raw, "test_fraction", 0.2),
                                    "data.test_fraction", minimum=0.0),
        "dirichlet_beta": _as_number(_pluck(raw, "dirichlet_beta", 0.1),
                                     "data.dirichlet_beta", minimum=0.0,
                                     exclusive=True),
    }
    if common["test_fraction"] >= 1.0:
        raise ConfigError("field 'data.test_fraction' must be < 1")
    if raw.get("csv") is not None:
        _reject_unknown(raw, {"csv", "num_classes", "test_fraction",
                              "dirichlet_beta"}, "data.")
        csv = raw["csv"]
        if not isinstance(csv, str):
            raise ConfigError("field 'data.csv' must be a path string")
        num_classes = raw.get("num_classes")
        if num_classes is not None:
            num_classes = _as_int(num_classes, "data.num_classes", minimum=2)
        return {"csv": csv, "num_classes": num_classes, **common}
    _reject_unknown(raw, {"csv", "num_classes", "dims", "per_class",
                          "test_fraction", "dirichlet_beta"}, "data.")
    return {
        "csv": None,
        "num_classes": _as_int(_pluck(raw, "num_classes", 4),
                               "data.num_classes", minimum=2),
        "dims": _as_int(_pluck(raw, "dims", 8), "data.dims", minimum=1),
        "per_class": _as_int(_pluck(raw, "per_class", 150),
                             "data.per_class", minimum=1),
        **common,
    }


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully validated, default-resolved experiment description."""

    seed: int
    algorithm: str
    threat_model: str
    epochs: int
    inter_group_period: int
    local_iterations: int
    learning_rate: float
    batch_size: int
    clip: float | tuple
    sigma: float | tuple
    participation: float | tuple
    delta: float
    variant: str
    bound: str
    alpha_grid: tuple
    heatmap_epochs: tuple
    output_dir: str
    structure: dict
    data: dict

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        _reject_unknown(raw, _TOP_LEVEL_KEYS)
        structure = _parse_structure(_pluck(raw, "structure"))

        def clip_entry(v, label):
            return _as_number(v, label, minimum=0.0, exclusive=True,
                              allow_inf=True)

        def sigma_entry(v, label):
            return _as_number(v, label, minimum=0.0)

        def part_entry(v, label):
            return _as_number(v, label, minimum=0.0, exclusive=True,
                              maximum=1.0)

        grid_raw = _pluck(raw, "alpha_grid", None)
        if grid_raw is None:
            alpha_grid = tuple(accountant.DEFAULT_ALPHA_GRID)
        else:
            if not isinstance(grid_raw, list) or not grid_raw:
                raise ConfigError("field 'alpha_grid' must be a non-empty "
                                  "list of orders > 1")
            alpha_grid = tuple(
                _as_number(a, f"alpha_grid[{k}]", minimum=1.0, exclusive=True)
                for k, a in enumerate(grid_raw))
        heat_raw = _pluck(raw, "heatmap_epochs", [])
        if not isinstance(heat_raw, list):
            raise ConfigError("field 'heatmap_epochs' must be a list")
        heatmap_epochs = tuple(sorted({
            _as_int(t, f"heatmap_epochs[{k}]", minimum=1)
            for k, t in enumerate(heat_raw)}))
        output_dir = _pluck(raw, "output_dir", "results")
        if not isinstance(output_dir, str) or not output_dir:
            raise ConfigError("field 'output_dir' must be a path string")

        config = cls(
            seed=_as_int(_pluck(raw, "seed", 0), "seed"),
            algorithm=_as_choice(_pluck(raw, "algorithm", "dpogl"),
                                 "algorithm", ("dpogl", "dpogl_plus")),
            threat_model=_as_choice(_pluck(raw, "threat_model", "tm1"),
                                    "threat_model", ("tm1", "tm2")),
            epochs=_as_int(_pluck(raw, "epochs"), "epochs", minimum=0),
            inter_group_period=_as_int(_pluck(raw, "inter_group_period", 10),
                                       "inter_group_period", minimum=1),
            local_iterations=_as_int(_pluck(raw, "local_iterations", 10),
                                     "local_iterations", minimum=1),
            learning_rate=_as_number(_pluck(raw, "learning_rate", 0.1),
                                     "learning_rate", minimum=0.0,
                                     exclusive=True),
            batch_size=_as_int(_pluck(raw, "batch_size", 8), "batch_size",
                               minimum=1),
            clip=_per_group(_pluck(raw, "clip", 0.05), "clip", clip_entry),
            sigma=_per_group(_pluck(raw, "sigma", 2.0), "sigma", sigma_entry),
            participation=_per_group(_pluck(raw, "participation", 0.7),
                                     "participation", part_entry),
            delta=_as_number(_pluck(raw, "delta", 1e-5), "delta", minimum=0.0,
                             exclusive=True, maximum=1.0),
            variant=_as_choice(_pluck(raw, "variant", "examples_consistent"),
                               "variant", accountant.VARIANTS),
            bound=_as_choice(_pluck(raw, "bound", "delay"), "bound",
                             BOUND_METHODS),
            alpha_grid=alpha_grid,
            heatmap_epochs=heatmap_epochs,
            output_dir=output_dir,
            structure=structure,
            data=_parse_data(raw.get("data")),
        )
        try:  # cross-field validation shared with the trainer
            _hyper_params(config)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return config

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        return cls.from_dict(raw)

    def num_groups(self) -> int:
        if "members_of_group" in self.structure:
            return len(self.structure["members_of_group"])
        return self.structure["num_groups"]

    def normalized(self) -> dict:
        """Default-resolved content minus the output location."""
        d = asdict(self)
        d.pop("output_dir")
        return d

    def config_hash(self) -> str:
        text = json.dumps(self.normalized(), sort_keys=True,
                          separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _hyper_params(config: ExperimentConfig) -> HyperParams:
    return HyperParams(
        num_groups=config.num_groups(),
        epochs=config.epochs,
        inter_group_period=config.inter_group_period,
        local_iterations=config.local_iterations,
        learning_rate=config.learning_rate,
        batch_size=config.batch_size,
        clip=config.clip,
        sigma=config.sigma,
        participation=config.participation,
        algorithm=config.algorithm,
        threat_model=config.threat_model,
        seed=config.seed,
    )


# ---------------------------------------------------------------------------
# pipeline

def _build_dataset(config: ExperimentConfig) -> Dataset:
    d = config.data
    if d["csv"] is not None:
        return load_csv(d["csv"], d["num_classes"])
    return make_synthetic(d["num_classes"], d["dims"], d["per_class"],
                          config.seed)


def _build_structure(config: ExperimentConfig, train_set: Dataset,
                     partition) -> GroupStructure:
    s = config.structure
    if "members_of_group" in s:
        return GroupStructure(s["num_workers"], s["members_of_group"],
                              kind=s["kind"])
    if s["kind"] == "LB":
        labels = worker_labels(train_set, partition)
        return generate_structure("LB", s["num_workers"], s["num_groups"],
                                  labels)
    return generate_structure(s["kind"], s["num_workers"], s["num_groups"])


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _write_lines(path: Path, header: str, rows) -> None:
    path.write_text("\n".join([header, *rows]) + "\n", encoding="utf-8")


def _run_accounting(config: ExperimentConfig, structure: GroupStructure,
                    hp: HyperParams, train_set: Dataset, out: Path
                    ) -> list[str]:
    """Emit pwp.csv and the heatmaps; raises ValueError on precondition
    failures so the caller can record them without touching training output."""
    grid = config.alpha_grid
    horizon = max((config.epochs, *config.heatmap_epochs))
    if config.bound == "degradation":
        beta = smoothness_bound(train_set.features)
        lsi = (accountant.lsi_recursion(structure, hp, beta, horizon)
               if horizon >= 1 else None)

        def curves_at(t: int) -> np.ndarray:
            return accountant.thm2_curve_matrix(structure, hp, beta, t, grid,
                                                config.variant, lsi)
    else:
        def curves_at(t: int) -> np.ndarray:
            return accountant.delay_curve_matrix(structure, hp, t, grid,
                                                 config.variant)

    written: list[str] = []
    pwp_rows = []
    for t in range(1, config.epochs + 1):
        for worker, eps_rdp, alpha_star, eps_dp in \
                accountant.pwp_rows_from_curves(curves_at(t), structure,
                                                config.threat_model,
                                                config.delta, grid):
            pwp_rows.append(f"{t},{worker},{_fmt(eps_rdp)},"
                            f"{_fmt(alpha_star)},{_fmt(eps_dp)}")
    _write_lines(out / "pwp.csv", "epoch,worker,eps_rdp,alpha_star,eps_dp",
                 pwp_rows)
    written.append("pwp.csv")
    for t in config.heatmap_epochs:
        matrix = accountant.dp_matrix_from_curves(curves_at(t), config.delta,
                                                  grid)
        rows = []
        for n in range(structure.num_workers):
            for i in range(structure.num_workers):
                if i == n:
                    continue
                cell = matrix[n, i]
                value = "trusted" if math.isnan(cell) else _fmt(cell)
                rows.append(f"{n},{i},{value}")
        name = f"heatmap_epoch_{t}.csv"
        _write_lines(out / name, "n,i,eps", rows)
        written.append(name)
    return written


def run_experiment(config: ExperimentConfig, with_training: bool = True
                   ) -> dict:
    """Execute the pipeline and return the manifest that was written.

    ``with_training=False`` runs the accounting stage only (the privacy
    reports are structural, so no trained model is needed).
    """
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    dataset = _build_dataset(config)
    train_set, test_set = stratified_split(dataset,
                                           config.data["test_fraction"],
                                           config.seed)
    partition = dirichlet_partition(train_set, config.structure["num_workers"],
                                    config.data["dirichlet_beta"], config.seed)
    structure = _build_structure(config, train_set, partition)
    hp = _hyper_params(config)
    outputs: list[str] = []
    if with_training:
        result = run_training(structure, hp, train_set, partition,
                              test_set if len(test_set) else None)
        _write_lines(out / "metrics.csv", "epoch,avg_train_loss,avg_test_acc",
                     [f"{m.epoch},{_fmt(m.avg_train_loss)},"
                      f"{_fmt(m.avg_test_acc)}" for m in result.metrics])
        outputs.append("metrics.csv")
    accounting_error = None
    try:
        outputs.extend(_run_accounting(config, structure, hp, train_set, out))
    except ValueError as exc:
        accounting_error = str(exc)
    manifest = {
        "config_hash": config.config_hash(),
        "seed": config.seed,
        "algorithm": config.algorithm,
        "threat_model": config.threat_model,
        "variant": config.variant,
        "bound": config.bound,
        "outputs": sorted(outputs),
        "accounting_error": accounting_error,
    }
    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n",
        encoding="utf-8")
    return manifest
