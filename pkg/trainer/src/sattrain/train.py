"""Dataset generation, the training loop, and weight export."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from .container import write_container
from .errors import ConfigError, DataFormatError, TrainingDiverged
from .features import (
    FeatureStats,
    SceneBatch,
    assemble_batch,
    compute_stats,
    fold_tensors,
)
from .geomgen import ShellConfig, sample_drop, synthesize_scenario
from .lossmodel import (
    batch_loss,
    draw_fading,
    forward_tuple,
    recover_precoders,
    weighted_sum_rate,
)
from .netcore import (
    ARCH_CEN,
    ARCH_DEC,
    CenDims,
    CenNet,
    DecDims,
    DecNet,
    default_cen_dims,
    default_dec_dims,
)
from .scenfile import (
    GridConfig,
    Scenario,
    canonical_watt,
    read_scenario,
    write_scenario,
)

SPLITS = ("train", "val", "test")
_MANIFEST_LINE = "sattrain dataset 1"


@dataclass
class TrainConfig:
    """Everything a run needs: geometry, dataset, and optimizer settings."""

    arch: str = ARCH_CEN
    sats: int = 3
    uts: int = 8
    tx_grid: tuple[int, int] = (4, 4)
    rx_grid: tuple[int, int] = (2, 1)
    spacing_wl: float = 0.5
    power_levels_dbw: tuple[float, ...] = (-10.0, -5.0, 0.0, 5.0, 10.0)
    split_sizes: tuple[int, int, int] = (7000, 2000, 1000)
    epochs: int = 200
    batch_size: int = 32
    learning_rate: float = 1e-3
    n_mc: int = 32
    val_n_mc: int = 64
    patience: int = 20
    seed: int = 0
    hidden: int | None = None
    fused: int | None = None
    depth: int | None = None
    heads: int | None = None

    def validate(self) -> None:
        if self.arch not in (ARCH_CEN, ARCH_DEC):
            raise ConfigError(f"unknown architecture {self.arch!r}")
        if self.sats < 1 or self.uts < 1:
            raise ConfigError("need at least one satellite and one terminal")
        if self.arch == ARCH_DEC and self.sats < 2:
            raise ConfigError("decentralized training needs at least two satellites")
        if min(self.tx_grid) < 1 or min(self.rx_grid) < 1:
            raise ConfigError("antenna grids must be positive")
        if self.spacing_wl <= 0:
            raise ConfigError("element spacing must be positive")
        if not self.power_levels_dbw:
            raise ConfigError("power level list is empty")
        if min(self.split_sizes) < 1:
            raise ConfigError("every split needs at least one sample")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch size must be positive")
        if self.learning_rate <= 0:
            raise ConfigError("learning rate must be positive")
        if self.n_mc < 1 or self.val_n_mc < 1:
            raise ConfigError("Monte-Carlo draw counts must be positive")
        if self.patience < 0:
            raise ConfigError("patience must be nonnegative")

    @property
    def grid(self) -> GridConfig:
        return GridConfig(
            m_x=self.tx_grid[0],
            m_y=self.tx_grid[1],
            n_x=self.rx_grid[0],
            n_y=self.rx_grid[1],
            spacing_wl=self.spacing_wl,
        )

    def network_dims(self):
        m, n = self.grid.m, self.grid.n
        if self.arch == ARCH_CEN:
            dims = default_cen_dims(m, n)
            if self.hidden is not None:
                dims = replace(dims, hidden=self.hidden)
            if self.fused is not None:
                dims = replace(dims, fused=self.fused)
            if self.depth is not None:
                dims = replace(dims, depth=self.depth)
            return dims
        dims = default_dec_dims(m, n)
        if self.hidden is not None:
            dims = replace(dims, hidden_loc=self.hidden, hidden_oth=self.hidden)
        if self.fused is not None:
            dims = replace(dims, fused_loc=self.fused, fused_oth=self.fused)
        if self.depth is not None:
            dims = replace(dims, depth=self.depth)
        if self.heads is not None:
            dims = replace(dims, heads=self.heads)
        return dims


# ---------------------------------------------------------------------------
# dataset generation


def power_level_watt(dbw: float) -> float:
    return canonical_watt(10.0 ** (dbw / 10.0))


def _sample_rng(seed: int, split_idx: int, sample_idx: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence(seed, spawn_key=(split_idx, sample_idx))
    )


def generate_sample(cfg: TrainConfig, split_idx: int, sample_idx: int) -> Scenario:
    """One scenario drop; the per-satellite budget is a randomly tagged level."""
    rng = _sample_rng(cfg.seed, split_idx, sample_idx)
    level = float(cfg.power_levels_dbw[rng.integers(len(cfg.power_levels_dbw))])
    shell = ShellConfig()
    geom = sample_drop(shell, cfg.sats, cfg.uts, rng)
    scn = synthesize_scenario(geom, shell, cfg.grid, rng, power_level_watt(level))
    scn.power_dbw = level
    return scn


def build_dataset(cfg: TrainConfig, out_dir: str | Path) -> Path:
    """Write train/val/test scenario files plus a manifest; returns out_dir."""
    cfg.validate()
    root = Path(out_dir)
    for split_idx, (split, size) in enumerate(zip(SPLITS, cfg.split_sizes)):
        sub = root / split
        sub.mkdir(parents=True, exist_ok=True)
        index_lines = []
        for i in range(size):
            scn = generate_sample(cfg, split_idx, i)
            name = f"scn_{i:05d}.txt"
            write_scenario(scn, sub / name)
            index_lines.append(f"{name} {scn.power_dbw!r}")
        (sub / "index.txt").write_text("\n".join(index_lines) + "\n")
    manifest = [
        _MANIFEST_LINE,
        f"sats {cfg.sats}",
        f"uts {cfg.uts}",
        f"tx_grid {cfg.tx_grid[0]} {cfg.tx_grid[1]}",
        f"rx_grid {cfg.rx_grid[0]} {cfg.rx_grid[1]}",
        f"spacing_wl {cfg.spacing_wl!r}",
        "power_levels_dbw " + " ".join(repr(float(v)) for v in cfg.power_levels_dbw),
        f"sizes {cfg.split_sizes[0]} {cfg.split_sizes[1]} {cfg.split_sizes[2]}",
        f"seed {cfg.seed}",
    ]
    (root / "manifest.txt").write_text("\n".join(manifest) + "\n")
    return root


def load_split(data_dir: str | Path, split: str, limit: int | None = None):
    """Scenarios of one split in index order."""
    sub = Path(data_dir) / split
    if not sub.is_dir():
        raise DataFormatError(f"dataset split directory missing: {sub}")
    names = sorted(p.name for p in sub.glob("scn_*.txt"))
    if not names:
        raise DataFormatError(f"no scenario files under {sub}")
    if limit is not None:
        names = names[:limit]
    return [read_scenario(sub / name) for name in names]


# ---------------------------------------------------------------------------
# training


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_wsr: float
    seconds: float


@dataclass
class TrainResult:
    container_path: Path
    arch: str
    epochs_run: int
    best_epoch: int
    best_val_wsr: float
    stats: FeatureStats
    history: list[EpochStats] = field(default_factory=list)


def build_model(cfg: TrainConfig, dtype=torch.float32):
    dims = cfg.network_dims()
    model = (CenNet if cfg.arch == ARCH_CEN else DecNet)(dims, seed=cfg.seed, dtype=dtype)
    model.seed_head_bias()
    return model


def _mean_val_wsr(
    model, batch: SceneBatch, z: torch.Tensor, chunk: int = 256
) -> float:
    total = 0.0
    count = batch.g.shape[0]
    with torch.no_grad():
        for lo in range(0, count, chunk):
            idx = slice(lo, min(lo + chunk, count))
            sub = batch.take(idx)
            pred = forward_tuple(model, sub, train=False)
            p = recover_precoders(sub, pred)
            total += float(weighted_sum_rate(sub, p, pred.bvec, z[idx]).sum())
    return total / count


def train(
    cfg: TrainConfig,
    data_dir: str | Path,
    out_path: str | Path,
    log=None,
    dtype=torch.float32,
) -> TrainResult:
    """Fit the chosen architecture on a generated dataset and export weights.

    Adam on the negated Monte-Carlo weighted sum rate with fresh fading
    draws every step; early stopping tracks the validation WSR and the best
    snapshot is what gets exported.  A non-finite loss aborts the run.
    """
    cfg.validate()
    emit = log or (lambda msg: None)

    train_scns = load_split(data_dir, "train", cfg.split_sizes[0])
    val_scns = load_split(data_dir, "val", cfg.split_sizes[1])
    stats = compute_stats(train_scns)
    train_batch = assemble_batch(train_scns, stats, dtype)
    val_batch = assemble_batch(val_scns, stats, dtype)
    n_train, s_n, k_n, n_rx = train_batch.dims
    emit(
        f"loaded {n_train} train / {len(val_scns)} val scenarios "
        f"(S={s_n}, K={k_n}, M={train_batch.g.shape[-1]}, N={n_rx})"
    )

    torch.manual_seed(cfg.seed)
    model = build_model(cfg, dtype)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    gen_shuffle = torch.Generator().manual_seed(cfg.seed + 1)
    gen_fading = torch.Generator().manual_seed(cfg.seed + 2)
    gen_val = torch.Generator().manual_seed(cfg.seed + 3)
    z_val = draw_fading(
        (len(val_scns), s_n, k_n, cfg.val_n_mc, n_rx), gen_val, dtype
    )

    best_val = -math.inf
    best_state: dict[str, torch.Tensor] = {}
    best_epoch = 0
    since_best = 0
    history: list[EpochStats] = []

    for epoch in range(1, cfg.epochs + 1):
        tic = time.monotonic()
        perm = torch.randperm(n_train, generator=gen_shuffle)
        losses = []
        for lo in range(0, n_train, cfg.batch_size):
            idx = perm[lo : lo + cfg.batch_size]
            sub = train_batch.take(idx)
            z = draw_fading(
                (idx.numel(), s_n, k_n, cfg.n_mc, n_rx), gen_fading, dtype
            )
            loss = batch_loss(sub, forward_tuple(model, sub, train=True), z)
            if not torch.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}; nothing was exported"
                )
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(float(loss.detach()))

        val_wsr = _mean_val_wsr(model, val_batch, z_val)
        history.append(
            EpochStats(epoch, float(np.mean(losses)), val_wsr, time.monotonic() - tic)
        )
        emit(
            f"epoch {epoch:3d}  loss {history[-1].train_loss:10.4f}  "
            f"val WSR {val_wsr:9.4f}  ({history[-1].seconds:.1f}s)"
        )
        if val_wsr > best_val:
            best_val = val_wsr
            best_epoch = epoch
            since_best = 0
            best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
        else:
            since_best += 1
            if since_best >= cfg.patience:
                emit(f"early stop: no validation gain for {cfg.patience} epochs")
                break

    model.load_state_dict(best_state)
    path = export_weights(model, stats, out_path)
    emit(f"best epoch {best_epoch} (val WSR {best_val:.4f}) -> {path}")
    return TrainResult(
        container_path=path,
        arch=cfg.arch,
        epochs_run=len(history),
        best_epoch=best_epoch,
        best_val_wsr=best_val,
        stats=stats,
        history=history,
    )


def export_weights(model, stats: FeatureStats, out_path: str | Path) -> Path:
    """Fold the normalization into the weights and write the container."""
    arch = ARCH_CEN if isinstance(model, CenNet) else ARCH_DEC
    folded = fold_tensors(arch, model.named_tensors(), stats)
    path = Path(out_path)
    write_container(arch, model.dims, folded, path)
    return path
