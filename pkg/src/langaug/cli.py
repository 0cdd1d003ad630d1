"""Config-driven experiment runner.

Subcommands: gen-data, train-ebms, augment, train-seg, eval-loo,
verify-theory, sweep, project. Configs are strict JSON (unknown keys are
rejected with their dotted path); each stage writes its resolved config, a
checksum manifest of its inputs, and CSV/JSON artifacts into the output
directory. Timestamps go to run.log only, so repeated runs with the same
config and seed produce byte-identical tables.
"""
from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import sys
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .cdtrain import CdConfig, ordered_pairs, train_ebm
from .energy import EnergyArch, load_energy_params, save_energy_params
from .errors import ConfigError, DivergenceError, MissingArtifactError
from .langevin import LangevinConfig
from .numerics import AdamHyper, derive_stream
from .pipeline import generate_augmented, load_augmented, save_augmented
from .segmenter import (SegTrainConfig, evaluate_model, leave_one_out_eval,
                        train_segmenter, write_results_csv)
from .synth import (DEFAULT_SPECS, DomainSpec, generate_benchmark,
                    generate_vector_glm, load_dataset, save_dataset)
from . import theory as th

SUBCOMMANDS = ("gen-data", "train-ebms", "augment", "train-seg", "eval-loo",
               "verify-theory", "sweep", "project")

_REQUIRED = object()

DEFAULT_CONFIG = {
    "base_seed": _REQUIRED,
    "data": {
        "n_domains": 4,
        "n_per_domain": 50,
        "image_size": 16,
        "channels": 1,
        "train_frac": 0.8,
        "specs": None,
    },
    "ebm": {
        "kind": "conv",
        "conv_blocks": 2,
        "hidden_width": 64,
        "cd": {
            "n_iters": 150,
            "batch_size": 8,
            "step_size": 0.1,
            "n_steps": 15,
            "lr": 0.001,
            "grad_clip": None,
            "checkpoint_every": None,
        },
    },
    "langevin": {
        "step_size": 1.0,
        "n_steps": 40,
        "store_stride": 3,
        "store_offset": 3,
        "channel_replace": "auto",
        "clamp_unit": False,
    },
    "augment": {
        "mix_ratio": 0.5,
    },
    "segmenter": {
        "epochs": 30,
        "batch_size": 8,
        "lr": 0.003,
        "seeds": [0, 1, 2, 3, 4],
    },
    "theory": {
        "family": "logistic",
        "k": 200,
        "dim": 2,
        "sigma_scale": 0.49,
        "theta": None,
        "betas": [0.02, 0.04, 0.08, 0.16],
        "n_mc": 4096,
        "max_mc": 524288,
        "probe_count": 1000,
        "probe_radii": None,
        "kappa1": None,
        "kappa2": None,
        "rad_n_mc": 2000,
        "ambient_dims": [2, 20, 200],
        "delta": 0.05,
    },
    "sweep": {
        "axis": "n_steps",
        "values": [20, 40, 60, 80],
        "folds": None,
        "seeds": [0],
    },
}


def _merge_strict(defaults, given, path=""):
    if not isinstance(given, dict):
        raise ConfigError(f"config section {path or '<root>'} must be an object")
    merged = {}
    for key, default in defaults.items():
        dotted = f"{path}.{key}" if path else key
        if key in given:
            value = given[key]
            if isinstance(default, dict):
                merged[key] = _merge_strict(default, value, dotted)
            else:
                merged[key] = value
        elif default is _REQUIRED:
            raise ConfigError(f"missing required config key {dotted}")
        else:
            merged[key] = copy.deepcopy(default)
    for key in given:
        if key not in defaults:
            dotted = f"{path}.{key}" if path else key
            raise ConfigError(f"unknown config key {dotted}")
    return merged


def load_config(path, seed_override=None) -> dict:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise ConfigError(f"config is not valid JSON: {err}") from err
    config = _merge_strict(DEFAULT_CONFIG, raw)
    if seed_override is not None:
        config["base_seed"] = int(seed_override)
    _validate(config)
    return config


def _validate(config) -> None:
    th_cfg = config["theory"]
    for beta in th_cfg["betas"]:
        if not isinstance(beta, (int, float)) or beta <= 0:
            raise ConfigError(f"theory.betas entries must be positive, got {beta!r}")
    if not 0.0 <= config["augment"]["mix_ratio"] <= 1.0:
        raise ConfigError("augment.mix_ratio must lie in [0, 1]")
    if config["sweep"]["axis"] not in ("n_steps", "step_size", "conv_blocks", "samples_per_chain"):
        raise ConfigError(f"unsupported sweep.axis {config['sweep']['axis']!r}")
    if config["data"]["specs"] is not None:
        if len(config["data"]["specs"]) != config["data"]["n_domains"]:
            raise ConfigError("data.specs length must equal data.n_domains")


def _specs_from_config(config):
    data = config["data"]
    if data["specs"] is None:
        return list(DEFAULT_SPECS[:data["n_domains"]])
    fields = {"domain_id", "gamma", "contrast", "texture_freq", "texture_amp", "noise_sigma"}
    specs = []
    for entry in data["specs"]:
        unknown = set(entry) - fields
        if unknown:
            raise ConfigError(f"unknown DomainSpec keys {sorted(unknown)}")
        specs.append(DomainSpec(**entry))
    return specs


def _langevin_from_config(config, channels: int) -> LangevinConfig:
    lv = config["langevin"]
    replace_ch = lv["channel_replace"]
    if replace_ch == "auto":
        replace_ch = 0 if channels > 1 else None
    return LangevinConfig(
        step_size=lv["step_size"],
        n_steps=lv["n_steps"],
        store_stride=lv["store_stride"],
        store_offset=lv["store_offset"],
        channel_replace=replace_ch,
        clamp_unit=lv["clamp_unit"],
    )


def _cd_from_config(config) -> CdConfig:
    ebm = config["ebm"]["cd"]
    return CdConfig(
        n_iters=ebm["n_iters"],
        batch_size=ebm["batch_size"],
        ld=LangevinConfig(step_size=ebm["step_size"], n_steps=ebm["n_steps"]),
        adam=AdamHyper(lr=ebm["lr"]),
        base_seed=config["base_seed"],
        grad_clip=ebm["grad_clip"],
        checkpoint_every=ebm["checkpoint_every"],
    )


def _seg_config(config) -> SegTrainConfig:
    seg = config["segmenter"]
    return SegTrainConfig(
        epochs=seg["epochs"],
        batch_size=seg["batch_size"],
        mix_ratio=config["augment"]["mix_ratio"],
        adam=AdamHyper(lr=seg["lr"]),
    )


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class Stage:
    """Output-directory bookkeeping shared by all subcommands."""

    def __init__(self, out_dir, name, config):
        self.dir = Path(out_dir) / name
        self.dir.mkdir(parents=True, exist_ok=True)
        self.inputs = {}
        (self.dir / "config.resolved.json").write_text(
            json.dumps(config, indent=2, sort_keys=True), encoding="utf-8"
        )
        self._log = []

    def log(self, message):
        self._log.append(f"{time.strftime('%Y-%m-%dT%H:%M:%S')} {message}")

    def record_input(self, path):
        path = Path(path)
        if not path.exists():
            raise MissingArtifactError(f"missing upstream artifact: {path}")
        self.inputs[str(path)] = _sha256(path)

    def finish(self):
        (self.dir / "manifest.json").write_text(
            json.dumps({"inputs": self.inputs}, indent=2, sort_keys=True), encoding="utf-8"
        )
        (self.dir / "run.log").write_text("\n".join(self._log) + "\n", encoding="utf-8")


def _require(path, hint) -> Path:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"missing upstream artifact: {path} (run `{hint}` first)")
    return path


def pca_project(vectors: np.ndarray, out_dim: int = 2) -> np.ndarray:
    """Mean-centered projection onto the top principal components.

    Degenerate covariance shrinks the output dimension with a warning.
    Component signs are fixed so the largest-magnitude loading is positive.
    """
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2:
        x = x.reshape(x.shape[0], -1)
    if x.shape[0] < 2:
        raise ConfigError("pca_project needs at least 2 vectors")
    centered = x - x.mean(axis=0)
    _, svals, vt = np.linalg.svd(centered, full_matrices=False)
    scale = svals[0] if svals.size and svals[0] > 0 else 1.0
    usable = int(np.sum(svals > 1e-12 * scale))
    if usable < out_dim:
        warnings.warn(f"covariance rank {usable} < requested {out_dim}; output reduced")
        out_dim = max(usable, 1)
    comps = vt[:out_dim]
    flips = np.sign(comps[np.arange(out_dim), np.argmax(np.abs(comps), axis=1)])
    comps = comps * flips[:, None]
    return centered @ comps.T


def explained_variance(vectors: np.ndarray) -> np.ndarray:
    x = np.asarray(vectors, dtype=np.float64).reshape(len(vectors), -1)
    centered = x - x.mean(axis=0)
    svals = np.linalg.svd(centered, compute_uv=False)
    return svals**2 / max(x.shape[0] - 1, 1)


# ---------------------------------------------------------------------------
# subcommands


def _cmd_gen_data(config, out_dir, jobs):
    stage = Stage(out_dir, "dataset", config)
    data = config["data"]
    stage.log("generating benchmark")
    dataset = generate_benchmark(
        n_domains=data["n_domains"],
        n_per_domain=data["n_per_domain"],
        image_size=data["image_size"],
        specs=_specs_from_config(config),
        seed=config["base_seed"],
        channels=data["channels"],
        train_frac=data["train_frac"],
    )
    save_dataset(dataset, stage.dir / "benchmark")
    stage.log(f"clamp fraction {dataset.clamp_fraction:.4f}")
    stage.finish()
    return 0


def _load_benchmark(out_dir, stage):
    base = _require(Path(out_dir) / "dataset" / "benchmark.meta.json", "gen-data").parent / "benchmark"
    dataset = load_dataset(base)
    stage.record_input(f"{base}.meta.json")
    return dataset


def _cmd_train_ebms(config, out_dir, jobs):
    stage = Stage(out_dir, "ebms", config)
    dataset = _load_benchmark(out_dir, stage)
    channels = dataset.images[0].shape[1]
    size = dataset.images[0].shape[2]
    ebm = config["ebm"]
    arch = EnergyArch(kind=ebm["kind"], input_shape=(channels, size, size),
                      conv_blocks=ebm["conv_blocks"], hidden_width=ebm["hidden_width"])
    cd_config = _cd_from_config(config)
    pairs = ordered_pairs(dataset.n_domains)
    stage.log(f"training {len(pairs)} pairwise models")

    def work(pair):
        i, j = pair
        from dataclasses import replace as dc_replace
        pair_cfg = dc_replace(cd_config, base_seed=config["base_seed"] + 7919 * (i * dataset.n_domains + j) + 1)
        ckpt_dir = stage.dir / f"ckpt_{i}_{j}" if cd_config.checkpoint_every else None
        params, trace = train_ebm(dataset.train_images(i), dataset.train_images(j),
                                  arch, pair_cfg, checkpoint_dir=ckpt_dir)
        return pair, params, trace

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(work, pairs))
    else:
        outcomes = [work(p) for p in pairs]
    for (i, j), params, trace in sorted(outcomes, key=lambda o: o[0]):
        save_energy_params(params, stage.dir / f"ebm_{i}_{j}", pair=(i, j))
        trace.write_csv(stage.dir / f"trace_{i}_{j}.csv")
    stage.finish()
    return 0


def _load_ebms(out_dir, stage, n_domains):
    ebms = {}
    for i, j in ordered_pairs(n_domains):
        base = Path(out_dir) / "ebms" / f"ebm_{i}_{j}"
        _require(f"{base}.ldtn", "train-ebms")
        stage.record_input(f"{base}.ldtn")
        params, _ = load_energy_params(base)
        ebms[(i, j)] = params
    return ebms


def _cmd_augment(config, out_dir, jobs):
    stage = Stage(out_dir, "aug", config)
    dataset = _load_benchmark(out_dir, stage)
    ebms = _load_ebms(out_dir, stage, dataset.n_domains)
    lv_config = _langevin_from_config(config, dataset.images[0].shape[1])
    stage.log("generating bridge samples")
    aug = generate_augmented(dataset, ebms, lv_config, config["base_seed"])
    save_augmented(aug, stage.dir / "augmented")
    stage.log(f"{len(aug)} entries, {aug.skipped_chains} chains skipped")
    stage.finish()
    return 0


def _cmd_train_seg(config, out_dir, jobs):
    stage = Stage(out_dir, "seg", config)
    dataset = _load_benchmark(out_dir, stage)
    seg_config = _seg_config(config)
    aug_path = Path(out_dir) / "aug" / "augmented.meta.json"
    aug = None
    if aug_path.exists():
        stage.record_input(aug_path)
        aug = load_augmented(aug_path.parent / "augmented")
    src_images = np.concatenate([dataset.train_images(d) for d in range(dataset.n_domains)])
    src_masks = np.concatenate([dataset.train_masks(d) for d in range(dataset.n_domains)])
    results = []
    for seed in config["segmenter"]["seeds"]:
        methods = [("erm", None)] + ([("erm+langaug", aug)] if aug is not None else [])
        for method, aug_data in methods:
            model = train_segmenter(
                src_images, src_masks, seg_config, seed=seed,
                aug_images=aug_data.images if aug_data is not None else None,
                aug_masks=aug_data.masks if aug_data is not None else None,
            )
            for d in range(dataset.n_domains):
                if len(dataset.test_images(d)) == 0:
                    continue
                results.append(evaluate_model(model, dataset.test_images(d),
                                              dataset.test_masks(d), d, method, seed))
    write_results_csv(results, stage.dir / "results.csv")
    stage.finish()
    return 0


def _cmd_eval_loo(config, out_dir, jobs):
    stage = Stage(out_dir, "loo", config)
    dataset = _load_benchmark(out_dir, stage)
    ebms = _load_ebms(out_dir, stage, dataset.n_domains)
    lv_config = _langevin_from_config(config, dataset.images[0].shape[1])
    seg_config = _seg_config(config)

    def builder(sources):
        sub = {(i, j): ebms[(i, j)] for i in sources for j in sources if i != j}
        return generate_augmented(dataset, sub, lv_config, config["base_seed"], domains=sources)

    stage.log("running leave-one-out evaluation")
    results = leave_one_out_eval(dataset, builder, seg_config,
                                 seeds=tuple(config["segmenter"]["seeds"]))
    write_results_csv(results, stage.dir / "results.csv", per_sample=False)
    stage.finish()
    return 0


def _theory_dataset(config):
    th_cfg = config["theory"]
    dim = th_cfg["dim"]
    sigma = np.eye(dim) * th_cfg["sigma_scale"]
    theta = (np.asarray(th_cfg["theta"], dtype=np.float64) if th_cfg["theta"] is not None
             else np.linspace(1.0, 0.5, dim))
    dataset = generate_vector_glm(
        k=th_cfg["k"], mu=np.zeros(dim), sigma_mat=sigma, theta_star=theta,
        family=th_cfg["family"], seed=config["base_seed"],
    )
    return dataset, theta


def _cmd_verify_theory(config, out_dir, jobs):
    stage = Stage(out_dir, "theory", config)
    th_cfg = config["theory"]
    dim = th_cfg["dim"]
    dataset, theta = _theory_dataset(config)
    stage.log("running remainder scan")
    report = th.taylor_remainder_scan(
        theta, dataset, th_cfg["betas"], n_mc=th_cfg["n_mc"],
        base_seed=config["base_seed"], max_mc=th_cfg["max_mc"],
    )

    kappa1 = th_cfg["kappa1"]
    if kappa1 is None:
        kappa1 = float(np.trace(np.linalg.inv(dataset.sigma_mat)))
    radii = th_cfg["probe_radii"]
    if radii is None:
        scale = float(np.linalg.norm(theta))
        radii = [0.9 * scale, scale, 1.1 * scale]
    kappa2 = th_cfg["kappa2"] if th_cfg["kappa2"] is not None else min(radii) ** 2
    rho_hat, skipped = th.estimate_rho(
        dataset, th_cfg["family"], th_cfg["probe_count"], kappa1, kappa2,
        derive_stream(config["base_seed"], [("rho", 0)]), radii=radii,
    )
    # gamma covers theta and every probe radius (probe-maximum constraint)
    gamma = th.constraint_value(theta, dataset)
    gamma_rng = derive_stream(config["base_seed"], [("gamma_probes", 0)])
    for p in range(th_cfg["probe_count"]):
        direction = gamma_rng.standard_normal(dim)
        norm = float(np.linalg.norm(direction))
        if norm < 1e-12:
            continue
        probe = direction / norm * radii[p % len(radii)]
        gamma = max(gamma, th.constraint_value(probe, dataset))
    sigma_min = th.lowest_nonzero_singular_value(dataset.sigma_mat)
    rank = th.matrix_rank(dataset.sigma_mat)
    bound_inputs = {
        "gamma": gamma, "rho_hat": rho_hat, "rho_probes_skipped": skipped,
        "sigma_min": sigma_min, "kappa1": kappa1, "kappa2": kappa2,
        "rank": rank, "k": dataset.k, "delta": th_cfg["delta"],
    }
    if rho_hat > 0 and gamma > 0:
        radius, c_const = th.radius_and_C(gamma, rho_hat, sigma_min)
        for ambient in th_cfg["ambient_dims"]:
            x_emb = _embed(dataset.x, ambient, config["base_seed"])
            est = th.empirical_rademacher(
                x_emb, radius, th_cfg["rad_n_mc"],
                derive_stream(config["base_seed"], [("rad", ambient)]),
            )
            report.rademacher_rows.append(th.RademacherRow(
                k=dataset.k, rank=rank, ambient_dim=ambient, estimate=est,
                bound=c_const * float(np.sqrt(rank / dataset.k)),
            ))
        L, L_A, B = th.loss_constants(theta, dataset)
        bound_inputs.update({"C": c_const, "radius": radius, "L": L, "L_A": L_A, "B": B})
        report.bound_value = th.generalization_bound(
            report.rows[0].l_std if report.rows else 0.0, c_const, rank,
            dataset.k, L, L_A, B, th_cfg["delta"],
        )
    report.bound_inputs = bound_inputs
    report.write_csv(stage.dir / "report.csv")
    report.write_summary_json(stage.dir / "summary.json")
    stage.log(f"slope {report.slope}, status {report.status}")
    stage.finish()
    return 0


def _embed(x: np.ndarray, ambient: int, seed: int) -> np.ndarray:
    d = x.shape[1]
    if ambient == d:
        return x
    if ambient < d:
        raise ConfigError("ambient dimension below data dimension")
    raw = derive_stream(seed, [("embed", ambient)]).standard_normal((ambient, d))
    q, _ = np.linalg.qr(raw)
    return x @ q[:, :d].T


def _cmd_sweep(config, out_dir, jobs):
    stage = Stage(out_dir, "sweep", config)
    dataset = _load_benchmark(out_dir, stage)
    sweep = config["sweep"]
    axis, values = sweep["axis"], sweep["values"]
    folds = sweep["folds"] if sweep["folds"] is not None else list(range(dataset.n_domains))
    seeds = sweep["seeds"]
    rows = []
    for value in values:
        cfg = copy.deepcopy(config)
        if axis == "n_steps":
            cfg["langevin"]["n_steps"] = int(value)
        elif axis == "step_size":
            cfg["langevin"]["step_size"] = float(value)
        elif axis == "conv_blocks":
            cfg["ebm"]["conv_blocks"] = int(value)
        elif axis == "samples_per_chain":
            stride = max(1, cfg["langevin"]["n_steps"] // int(value))
            cfg["langevin"]["store_stride"] = stride
            cfg["langevin"]["store_offset"] = stride
        rows.append(_sweep_cell(cfg, dataset, axis, value, folds, seeds, stage))
    with open(stage.dir / "results.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["axis", "value", "mean_dice_erm", "mean_iou_erm",
                         "mean_dice_aug", "mean_iou_aug"])
        for row in rows:
            writer.writerow(row)
    stage.finish()
    return 0


def _sweep_cell(cfg, dataset, axis, value, folds, seeds, stage):
    channels = dataset.images[0].shape[1]
    size = dataset.images[0].shape[2]
    ebm = cfg["ebm"]
    arch = EnergyArch(kind=ebm["kind"], input_shape=(channels, size, size),
                      conv_blocks=ebm["conv_blocks"], hidden_width=ebm["hidden_width"])
    cd_config = _cd_from_config(cfg)
    lv_config = _langevin_from_config(cfg, channels)
    seg_config = _seg_config(cfg)
    from dataclasses import replace as dc_replace

    ebms = {}
    for i, j in ordered_pairs(dataset.n_domains):
        pair_cfg = dc_replace(cd_config,
                              base_seed=cfg["base_seed"] + 7919 * (i * dataset.n_domains + j) + 1)
        ebms[(i, j)], _ = train_ebm(dataset.train_images(i), dataset.train_images(j),
                                    arch, pair_cfg)
    erm_scores, aug_scores = [], []
    for fold in folds:
        sources = [d for d in range(dataset.n_domains) if d != fold]
        sub = {(i, j): ebms[(i, j)] for i in sources for j in sources if i != j}
        aug = generate_augmented(dataset, sub, lv_config, cfg["base_seed"], domains=sources)
        src_images = np.concatenate([dataset.train_images(d) for d in sources])
        src_masks = np.concatenate([dataset.train_masks(d) for d in sources])
        for seed in seeds:
            erm = train_segmenter(src_images, src_masks, seg_config, seed=seed + 1000 * fold)
            plus = train_segmenter(src_images, src_masks, seg_config, seed=seed + 1000 * fold,
                                   aug_images=aug.images, aug_masks=aug.masks)
            erm_scores.append(evaluate_model(erm, dataset.images[fold], dataset.masks[fold],
                                             fold, "erm", seed))
            aug_scores.append(evaluate_model(plus, dataset.images[fold], dataset.masks[fold],
                                             fold, "erm+langaug", seed))
    stage.log(f"{axis}={value} done")
    return [axis, value,
            repr(float(np.mean([r.mean_dice for r in erm_scores]))),
            repr(float(np.mean([r.mean_iou for r in erm_scores]))),
            repr(float(np.mean([r.mean_dice for r in aug_scores]))),
            repr(float(np.mean([r.mean_iou for r in aug_scores])))]


def _cmd_project(config, out_dir, jobs):
    stage = Stage(out_dir, "project", config)
    dataset = _load_benchmark(out_dir, stage)
    rows = []
    vectors = []
    for d in range(dataset.n_domains):
        for img in dataset.images[d]:
            vectors.append(img.ravel())
            rows.append(("src", d, -1, 0))
    aug_path = Path(out_dir) / "aug" / "augmented.meta.json"
    if aug_path.exists():
        stage.record_input(aug_path)
        aug = load_augmented(aug_path.parent / "augmented")
        for idx in range(len(aug)):
            vectors.append(aug.images[idx].ravel())
            rows.append(("aug", int(aug.source_domain[idx]), int(aug.target_domain[idx]),
                         int(aug.step_index[idx])))
    coords = pca_project(np.stack(vectors), out_dim=2)
    with open(stage.dir / "coords.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["kind", "domain", "target", "step", "pc1", "pc2"])
        for (kind, dom, tgt, step), xy in zip(rows, coords):
            writer.writerow([kind, dom, tgt, step, repr(float(xy[0])),
                             repr(float(xy[1])) if coords.shape[1] > 1 else repr(0.0)])
    _write_centroid_report(rows, coords, stage.dir / "centroids.json")
    stage.finish()
    return 0


def _write_centroid_report(rows, coords, path):
    """Distances from augmented (i, j) centroids to source centroids (reported)."""
    src_centroids = {}
    for d in {r[1] for r in rows if r[0] == "src"}:
        pts = np.stack([c for r, c in zip(rows, coords) if r[0] == "src" and r[1] == d])
        src_centroids[d] = pts.mean(axis=0)
    out = {}
    pairs = {(r[1], r[2]) for r in rows if r[0] == "aug"}
    for i, j in sorted(pairs):
        pts = np.stack([c for r, c in zip(rows, coords)
                        if r[0] == "aug" and r[1] == i and r[2] == j])
        centroid = pts.mean(axis=0)
        out[f"{i}->{j}"] = {
            "dist_to_source": float(np.linalg.norm(centroid - src_centroids[i])),
            "dist_to_target": float(np.linalg.norm(centroid - src_centroids[j])),
        }
    Path(path).write_text(json.dumps(out, indent=2, sort_keys=True), encoding="utf-8")


_HANDLERS = {
    "gen-data": _cmd_gen_data,
    "train-ebms": _cmd_train_ebms,
    "augment": _cmd_augment,
    "train-seg": _cmd_train_seg,
    "eval-loo": _cmd_eval_loo,
    "verify-theory": _cmd_verify_theory,
    "sweep": _cmd_sweep,
    "project": _cmd_project,
}


def run(subcommand: str, config_path, out_dir, jobs: int = 1, seed=None) -> int:
    """Execute one subcommand; returns the process exit code."""
    try:
        if subcommand not in _HANDLERS:
            raise ConfigError(f"unknown subcommand {subcommand!r}")
        config = load_config(config_path, seed_override=seed)
        return _HANDLERS[subcommand](config, out_dir, max(1, int(jobs)))
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except MissingArtifactError as err:
        print(f"missing artifact: {err}", file=sys.stderr)
        return 3
    except DivergenceError as err:
        print(f"numeric divergence: {err}", file=sys.stderr)
        return 4


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="langaug", description=__doc__)
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", required=True, help="strict JSON experiment config")
    parser.add_argument("--out", required=True, help="experiment output directory")
    parser.add_argument("--jobs", type=int, default=1, help="worker cap for parallel stages")
    parser.add_argument("--seed", type=int, default=None, help="override base_seed")
    args = parser.parse_args(argv)
    return run(args.subcommand, args.config, args.out, jobs=args.jobs, seed=args.seed)


def console_main() -> None:
    sys.exit(main())
