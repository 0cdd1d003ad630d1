"""Building the augmented dataset of bridge samples.

For every ordered domain pair (i, j) and every training image of domain i,
a Langevin chain runs under the (i -> j) model; each stored iterate joins
the augmented pool carrying the origin sample's mask and (i, j, step) tags.
Augmented data is generated once and persisted; downstream training then
interleaves it with the originals at a configurable per-batch ratio.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cdtrain import ordered_pairs
from .energy import EnergyParams
from .errors import ConfigError, DivergenceError
from .langevin import LangevinConfig, run_chain_batch
from .ldtn import read_meta, read_tensor, write_meta, write_tensor
from .numerics import derive_stream
from .synth import MultiDomainDataset


@dataclass
class AugmentedDataset:
    images: np.ndarray          # (m, C, H, W)
    masks: np.ndarray           # (m, H, W)
    source_domain: np.ndarray   # (m,) int
    target_domain: np.ndarray   # (m,) int
    step_index: np.ndarray      # (m,) int
    origin_index: np.ndarray    # (m,) int, index into the origin domain's samples
    provenance: dict = field(default_factory=dict)
    skipped_chains: int = 0

    def __len__(self) -> int:
        return int(self.images.shape[0])

    def counts_by_tag(self) -> dict:
        counts = {}
        for i, j, k in zip(self.source_domain, self.target_domain, self.step_index):
            key = (int(i), int(j), int(k))
            counts[key] = counts.get(key, 0) + 1
        return counts

    def domains_touched(self) -> set[int]:
        return set(self.source_domain.tolist()) | set(self.target_domain.tolist())


def params_checksum(params: EnergyParams) -> str:
    return hashlib.sha256(np.ascontiguousarray(params.theta).tobytes()).hexdigest()[:16]


def generate_augmented(dataset: MultiDomainDataset, ebms: dict, config: LangevinConfig,
                       base_seed: int, domains=None) -> AugmentedDataset:
    """Run chains for every (pair, training sample) and collect iterates.

    ``domains`` restricts the construction to a subset of domain ids (the
    leave-one-out folds pass the source domains only).
    """
    if domains is None:
        domains = range(dataset.n_domains)
    domains = sorted(int(d) for d in domains)
    pairs = [(domains[i], domains[j]) for i, j in ordered_pairs(len(domains))]
    for pair in pairs:
        if pair not in ebms:
            raise ConfigError(f"missing energy model for pair {pair}")

    images, masks = [], []
    src_tag, tgt_tag, step_tag, origin_tag = [], [], [], []
    skipped = 0
    stored_steps = config.stored_steps()
    for i, j in pairs:
        params = ebms[(i, j)]
        train_idx = dataset.split[i]["train"]
        x0 = dataset.images[i][train_idx]
        m0 = dataset.masks[i][train_idx]
        if x0.shape[0] == 0:
            continue
        noise = np.stack([
            derive_stream(base_seed, [("aug_pair_i", i), ("aug_pair_j", j), ("chain", int(s))])
            .standard_normal((config.n_steps,) + x0.shape[1:])
            for s in train_idx
        ], axis=1)  # (K, n_i, C, H, W)
        try:
            _, stored = run_chain_batch(x0, params, config, noise)
        except DivergenceError:
            # Fall back to per-chain execution so healthy chains survive.
            stored = {t: [] for t in stored_steps}
            keep_rows = []
            for row in range(x0.shape[0]):
                try:
                    _, one = run_chain_batch(x0[row:row + 1], params, config, noise[:, row:row + 1])
                except DivergenceError:
                    skipped += 1
                    continue
                keep_rows.append(row)
                for t in stored_steps:
                    stored[t].append(one[t][0])
            stored = {t: np.stack(v) if v else np.empty((0,) + x0.shape[1:])
                      for t, v in stored.items()}
            x0 = x0[keep_rows]
            m0 = m0[keep_rows]
            train_idx = [train_idx[r] for r in keep_rows]
        for t in stored_steps:
            images.append(stored[t])
            masks.append(m0)
            src_tag.append(np.full(x0.shape[0], i, dtype=np.int64))
            tgt_tag.append(np.full(x0.shape[0], j, dtype=np.int64))
            step_tag.append(np.full(x0.shape[0], t, dtype=np.int64))
            origin_tag.append(np.asarray(train_idx, dtype=np.int64))

    if images:
        images_arr = np.concatenate(images)
        masks_arr = np.concatenate(masks)
    else:
        images_arr = np.empty((0,))
        masks_arr = np.empty((0,))
    return AugmentedDataset(
        images=images_arr,
        masks=masks_arr,
        source_domain=np.concatenate(src_tag) if src_tag else np.empty(0, dtype=np.int64),
        target_domain=np.concatenate(tgt_tag) if tgt_tag else np.empty(0, dtype=np.int64),
        step_index=np.concatenate(step_tag) if step_tag else np.empty(0, dtype=np.int64),
        origin_index=np.concatenate(origin_tag) if origin_tag else np.empty(0, dtype=np.int64),
        provenance={
            "ebm_checksums": {f"{i}_{j}": params_checksum(ebms[(i, j)]) for i, j in pairs},
            "langevin": {
                "step_size": config.step_size, "n_steps": config.n_steps,
                "store_stride": config.store_stride, "store_offset": config.store_offset,
            },
            "base_seed": base_seed,
        },
        skipped_chains=skipped,
    )


def assemble_training_stream(n_src: int, n_aug: int, mix_ratio: float, seed: int,
                             batch_size: int = 8, epoch: int = 0) -> list[tuple[str, int]]:
    """Deterministic epoch stream of ("src" | "aug", index) batch entries.

    Every batch carries round(batch_size * mix_ratio) augmented entries;
    source indices each appear exactly once per epoch.
    """
    if not 0.0 <= mix_ratio <= 1.0:
        raise ConfigError("mix_ratio must lie in [0, 1]")
    if n_src < 1:
        raise ConfigError("need source samples")
    if mix_ratio > 0 and n_aug < 1:
        raise ConfigError("mix_ratio > 0 requires a non-empty augmented pool")
    rng = derive_stream(seed, [("stream", 0), ("epoch", epoch)])
    n_aug_per_batch = int(round(batch_size * mix_ratio))
    n_src_per_batch = batch_size - n_aug_per_batch
    src_order = [("src", int(v)) for v in rng.permutation(n_src)]
    if n_src_per_batch == 0:
        n_batches = max(1, (n_src + batch_size - 1) // batch_size)
    else:
        n_batches = (n_src + n_src_per_batch - 1) // n_src_per_batch
    aug_pool: list[int] = []
    stream: list[tuple[str, int]] = []
    src_pos = 0
    for _ in range(n_batches):
        batch: list[tuple[str, int]] = []
        take = min(n_src_per_batch, n_src - src_pos)
        batch.extend(src_order[src_pos:src_pos + take])
        src_pos += take
        if n_aug_per_batch > 0:
            for _ in range(n_aug_per_batch):
                if not aug_pool:
                    aug_pool = [int(v) for v in rng.permutation(n_aug)]
                batch.append(("aug", aug_pool.pop()))
        order = rng.permutation(len(batch))
        stream.extend(batch[int(p)] for p in order)
    return stream


def save_augmented(aug: AugmentedDataset, basename) -> None:
    base = Path(basename)
    base.parent.mkdir(parents=True, exist_ok=True)
    write_tensor(f"{base}.images.ldtn", aug.images)
    write_tensor(f"{base}.masks.ldtn", aug.masks)
    write_tensor(f"{base}.tags.ldtn", np.stack([
        aug.source_domain, aug.target_domain, aug.step_index, aug.origin_index,
    ]).astype(np.float64))
    counts = {f"{i}_{j}_{k}": v for (i, j, k), v in sorted(aug.counts_by_tag().items())}
    write_meta(base, {
        "entries": len(aug),
        "counts_by_pair_step": counts,
        "provenance": aug.provenance,
        "skipped_chains": aug.skipped_chains,
    })


def load_augmented(basename) -> AugmentedDataset:
    base = Path(basename)
    meta = read_meta(base)
    tags = read_tensor(f"{base}.tags.ldtn").astype(np.int64)
    return AugmentedDataset(
        images=read_tensor(f"{base}.images.ldtn"),
        masks=read_tensor(f"{base}.masks.ldtn"),
        source_domain=tags[0],
        target_domain=tags[1],
        step_index=tags[2],
        origin_index=tags[3],
        provenance=meta["provenance"],
        skipped_chains=meta["skipped_chains"],
    )
