from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from src.align_utils.align2d import landscape_2d_batch
from src.align_utils.align3d import landscape_3d_batch, wigner_stack
from src.align_utils.compress2d import compressed_landscapes_by_group, kernel_2d, principal_basis
from src.align_utils.compress3d import compressed_volume_landscapes, kernel_3d_degree, kernel_3d_radial
from src.align_utils.pairs import timed
from src.config.settings import EnvSettings
from src.data_utils.container import ContainerKind, read_container
from src.data_utils.local import (
    RUN_INDEX, RunStore, list_containers, write_landscape_csv_2d, write_landscape_csv_3d, write_spectrum_csv,
)
from src.data_utils.manifest import RunManifest, load_manifest, parse_betas
from src.data_utils.synth import NoiseSpec, load_phantom, make_image_set, make_volume_set
from src.errors import NumericalCheckError, ValidationFailure
from src.eval_utils.bench import PhaseTimer, cost_ledger_2d, cost_ledger_3d, linear_fit, speedup
from src.eval_utils.metrics import ComparisonReport, compare_landscapes, curve_to_csv, report_to_json
from src.transform_utils.grids import PolarGrid, SphereGrid
from src.transform_utils.polarfft import BesselImage, PolarImage, bessel_forward, bessel_inverse
from src.transform_utils.spharm import SphVolume

FULL_CACHE = "landscapes_full.rra"
FULL_META = "landscapes_full.json"
SPECTRUM = "spectrum.csv"
CURVE = "curve.csv"


@dataclass
class RunOptions:
    """Manifest plus the settings and CLI overrides every command needs."""
    manifest: RunManifest
    out_dir: Path
    workers: int
    block_size: int
    progress: bool
    sample_method: str
    full_rank_tolerance: float
    psd_tolerance: float


def resolve_options(args, env: EnvSettings) -> RunOptions:
    """
    CLI flags override the manifest, which overrides the environment settings.

    Raises:
        ValidationFailure: On an invalid manifest or worker count.
    """
    manifest = load_manifest(args.manifest)
    workers = env.workers if args.workers is None else args.workers
    if workers < 1:
        raise ValidationFailure(f"Worker count must be positive, got {workers}")
    out_dir = Path(args.out or manifest.output_dir or env.output_dir)
    return RunOptions(
        manifest=manifest,
        out_dir=out_dir,
        workers=workers,
        block_size=env.block_size,
        progress=env.progress,
        sample_method=env.sample_method,
        full_rank_tolerance=env.full_rank_tolerance,
        psd_tolerance=env.psd_tolerance,
    )


def _noise(manifest: RunManifest) -> NoiseSpec:
    return NoiseSpec(sigma=manifest.noise.sigma, seed=manifest.noise.seed)


def _polar_grid_record(grid: PolarGrid) -> Dict:
    return {"K": float(grid.K), "R": int(grid.R), "Q": int(grid.Q)}


def _sphere_grid_record(grid: SphereGrid) -> Dict:
    return {"K": float(grid.K), "R": int(grid.R), "L": int(grid.L)}


def _check_index(index: Dict, kind: str, grid_record: Dict) -> None:
    if index.get("kind") != kind:
        raise ValidationFailure(f"Run directory holds a '{index.get('kind')}' set, expected '{kind}'")
    if index.get("grid") != grid_record:
        raise ValidationFailure(f"Synthetic set grid {index.get('grid')} differs from manifest grid {grid_record}")


def _write_spectra(store: RunStore, spectra: Sequence[Tuple[str, np.ndarray]]) -> None:
    store.remove(SPECTRUM)
    for label, eigenvalues in spectra:
        write_spectrum_csv(store.path(SPECTRUM), eigenvalues, label)


def _check_full_rank(report: ComparisonReport, tolerance: float, label: str) -> None:
    if report.rel_frobenius > tolerance:
        logger.error(f"{label}: full-rank relative error {report.rel_frobenius:.3e} exceeds {tolerance:.1e}")
        raise NumericalCheckError(
            f"{label}: full-rank compressed landscapes differ from the full ones "
            f"(relative error {report.rel_frobenius:.3e} > {tolerance:.1e})"
        )


def run_synth2d(opts: RunOptions) -> Path:
    """Write image_XXXX.rra and target_XXXX.rra polar-image containers plus index.json."""
    m = opts.manifest
    grid = m.require_polar().build()
    phantom = load_phantom(m.phantom)
    s = m.synth2d
    image_set = make_image_set(
        phantom, grid, s.n_images, s.n_targets, s.n_groups, s.ctf_lambdas,
        noise=_noise(m), snr=m.noise.snr, noise_domain=m.noise.domain, N=m.noise.N,
        sample_method=opts.sample_method,
    )
    store = RunStore(opts.out_dir, logger, reset=True)
    for i, img in enumerate(image_set.images):
        store.write_array(f"image_{i:04d}.rra", ContainerKind.POLAR_IMAGE, bessel_inverse(img).values)
    for j, target in enumerate(image_set.targets):
        store.write_array(f"target_{j:04d}.rra", ContainerKind.POLAR_IMAGE, bessel_inverse(target).values)
    store.write_json(RUN_INDEX, {
        "kind": "synth2d",
        "phantom": m.phantom,
        "grid": _polar_grid_record(grid),
        "n_images": s.n_images,
        "n_targets": s.n_targets,
        "target_groups": image_set.target_groups.tolist(),
        "image_groups": image_set.image_groups.tolist(),
        "image_sources": image_set.image_sources.tolist(),
        "planted_gammas": image_set.planted_gammas.tolist(),
        "sigma_hat": image_set.sigma_hat,
    })
    logger.info(f"Wrote {s.n_images} images and {s.n_targets} targets to {store.directory}")
    return store.directory


def run_synth3d(opts: RunOptions) -> Path:
    """Write volume_XXXX.rra and target_0000.rra sph-volume containers plus index.json."""
    m = opts.manifest
    grid = m.require_sphere().build()
    volume_set = make_volume_set(load_phantom(m.phantom), grid, m.synth3d.n_volumes, noise=_noise(m), snr=m.noise.snr)
    store = RunStore(opts.out_dir, logger, reset=True)
    for i, vol in enumerate(volume_set.volumes):
        store.write_array(f"volume_{i:04d}.rra", ContainerKind.SPH_VOLUME, vol.coeffs)
    store.write_array("target_0000.rra", ContainerKind.SPH_VOLUME, volume_set.target.coeffs)
    store.write_json(RUN_INDEX, {
        "kind": "synth3d",
        "phantom": m.phantom,
        "grid": _sphere_grid_record(grid),
        "n_volumes": m.synth3d.n_volumes,
        "planted_taus": [list(tau) for tau in volume_set.planted_taus],
        "sigma_hat": volume_set.sigma_hat,
    })
    logger.info(f"Wrote {m.synth3d.n_volumes} volumes and 1 target to {store.directory}")
    return store.directory


def _set_files(store: RunStore, prefix: str, count: int) -> List[Path]:
    paths = list_containers(store.directory, f"{prefix}_")
    if len(paths) != count:
        raise ValidationFailure(
            f"{store.directory} holds {len(paths)} {prefix} containers but {RUN_INDEX} lists {count}"
        )
    return paths


def _load_images(store: RunStore, prefix: str, count: int, grid: PolarGrid) -> List[BesselImage]:
    return [
        bessel_forward(PolarImage(grid=grid, values=read_container(path, ContainerKind.POLAR_IMAGE)))
        for path in _set_files(store, prefix, count)
    ]


def _load_volumes(store: RunStore, prefix: str, count: int, grid: SphereGrid) -> List[SphVolume]:
    return [
        SphVolume(grid=grid, coeffs=read_container(path, ContainerKind.SPH_VOLUME))
        for path in _set_files(store, prefix, count)
    ]


def _requested_ranks(args, manifest: RunManifest) -> List[int]:
    if args.rank is not None:
        return [args.rank]
    return list(manifest.h_sweep)


def _per_pair_total(timing: Dict[str, float]) -> float:
    return sum(value for name, value in timing.items() if name.startswith("per_pair"))


def run_align2d(opts: RunOptions, args) -> List[ComparisonReport]:
    """
    Full landscapes with --full; rank-H landscapes for --rank or the manifest's h_sweep,
    with one kernel per target group. Compressed runs are compared with the cached
    full run; a sweep without that cache is rejected.

    Raises:
        ValidationFailure: Nothing requested, inconsistent set, or missing full-run cache.
        NumericalCheckError: Non-PSD kernel or inexact full-rank reduction.
    """
    m = opts.manifest
    polar = m.require_polar()
    grid = polar.build()
    Q_out = polar.output_length
    ranks = _requested_ranks(args, m)
    if not args.full and not ranks:
        raise ValidationFailure("Nothing to align: pass --full or --rank, or set h_sweep in the manifest")

    store = RunStore(opts.out_dir, logger)
    index = store.read_json(RUN_INDEX)
    _check_index(index, "synth2d", _polar_grid_record(grid))
    images = _load_images(store, "image", index["n_images"], grid)
    targets = _load_images(store, "target", index["n_targets"], grid)
    if m.group_key == "ctf":
        groups = np.asarray(index["target_groups"])
    else:
        groups = np.zeros(len(targets), dtype=int)
    logger.info(f"Aligning {len(images)} images to {len(targets)} targets in {np.unique(groups).size} groups")

    if args.full:
        timer = PhaseTimer()
        full = landscape_2d_batch(images, targets, Q_out, opts.block_size, opts.workers, opts.progress, timer=timer)
        store.write_array(FULL_CACHE, ContainerKind.LANDSCAPE, full)
        write_landscape_csv_2d(store.path("landscapes_full.csv"), full)
        store.write_json(FULL_META, {"Q_out": Q_out, "timing": timer.medians()})
        logger.info(f"Full landscapes {full.shape} written in {_per_pair_total(timer.medians()):.3f}s")
    if not ranks:
        return []

    full, full_meta = None, None
    if store.has(FULL_CACHE):
        full = store.read_array(FULL_CACHE, ContainerKind.LANDSCAPE)
        full_meta = store.read_json(FULL_META)
        if full.shape != (len(images), len(targets), Q_out):
            raise ValidationFailure(f"Cached full landscapes {full.shape} do not match this run")
    elif args.rank is None:
        logger.error("A rank sweep needs the full-run cache")
        raise ValidationFailure(f"Missing {FULL_CACHE} in {store.directory}; run align2d --full first")
    else:
        logger.warning(f"No {FULL_CACHE} in {store.directory}; skipping the comparison report")

    spectra, kernels = [], {}
    for group in np.unique(groups):
        kern = kernel_2d([targets[j] for j in np.flatnonzero(groups == group)], opts.block_size, opts.workers)
        kernels[int(group)] = kern
        store.write_array(f"kernel_g{group}.rra", ContainerKind.KERNEL, kern.entries)
        spectra.append((f"group{group}", principal_basis(kern, kern.dim).eigenvalues))
    _write_spectra(store, spectra)

    reports, speedups = [], []
    for H in ranks:
        timer = PhaseTimer()
        values, bases = compressed_landscapes_by_group(
            images, targets, groups, H, Q_out, opts.block_size, opts.workers, opts.progress,
            psd_tolerance=opts.psd_tolerance, timer=timer, kernels=kernels,
        )
        store.write_array(f"landscapes_h{H:03d}.rra", ContainerKind.LANDSCAPE, values)
        write_landscape_csv_2d(store.path(f"landscapes_h{H:03d}.csv"), values)
        for group, basis in bases.items():
            store.write_array(f"basis_h{H:03d}_g{group}.rra", ContainerKind.BASIS, basis.vectors)
        if full is None:
            continue
        report = compare_landscapes(values, full, H, pair_axes=2, timing=timer.medians())
        report_to_json(report, store.path(f"report_h{H:03d}.json"))
        logger.info(
            f"H={H}: rel_frobenius={report.rel_frobenius:.3e} correlation={report.correlation:.4f} "
            f"mean f={report.backward_fraction_mean:.4f}"
        )
        if H == grid.R:
            _check_full_rank(report, opts.full_rank_tolerance, f"align2d H={H}")
        reports.append(report)
        speedups.append(speedup(_per_pair_total(full_meta["timing"]), _per_pair_total(report.timing)))
    if reports:
        curve_to_csv(reports, store.path(CURVE), [float("nan") if s is None else s for s in speedups])
    return reports


def _volume_ranks(args, manifest: RunManifest, grid: SphereGrid) -> List[Tuple[int, int]]:
    if args.rank_c is not None or args.rank_d is not None or args.rank is not None:
        H_C = args.rank_c if args.rank_c is not None else args.rank
        H_D = args.rank_d if args.rank_d is not None else args.rank
        if H_C is None or H_D is None:
            raise ValidationFailure("Volume alignment needs both ranks: --rank, or --rank-c with --rank-d")
        return [(H_C, H_D)]
    return [(min(h, grid.R), min(h, grid.L + 1)) for h in manifest.h_sweep]


def run_align3d(opts: RunOptions, args) -> List[ComparisonReport]:
    """
    Volume counterpart of run_align2d: full landscapes with --full, (H_C, H_D)
    landscapes for --rank/--rank-c/--rank-d or the h_sweep, compared after removing
    each landscape's mean.

    Raises:
        ValidationFailure: Nothing requested, inconsistent set, or missing full-run cache.
        NumericalCheckError: Non-PSD kernel or inexact full-rank reduction.
    """
    m = opts.manifest
    grid = m.require_sphere().build()
    betas = m.beta_grid(parse_betas(args.betas))
    ranks = _volume_ranks(args, m, grid)
    if not args.full and not ranks:
        raise ValidationFailure("Nothing to align: pass --full or --rank-c/--rank-d, or set h_sweep in the manifest")

    store = RunStore(opts.out_dir, logger)
    index = store.read_json(RUN_INDEX)
    _check_index(index, "synth3d", _sphere_grid_record(grid))
    volumes = _load_volumes(store, "volume", index["n_volumes"], grid)
    target = _load_volumes(store, "target", 1, grid)[0]
    logger.info(f"Aligning {len(volumes)} volumes to one target over {betas.size} betas")

    if args.full:
        timer = PhaseTimer()
        with timed(timer, "precompute.wigner"):
            tables = wigner_stack(betas, grid.L)
        full = landscape_3d_batch(
            volumes, target, betas, opts.block_size, opts.workers, opts.progress, tables=tables, timer=timer,
        )
        store.write_array(FULL_CACHE, ContainerKind.LANDSCAPE, full)
        write_landscape_csv_3d(store.path("landscapes_full.csv"), full, betas)
        store.write_json(FULL_META, {"betas": betas.tolist(), "timing": timer.medians()})
        logger.info(f"Full volume landscapes {full.shape} written")
    if not ranks:
        return []

    full, full_meta = None, None
    if store.has(FULL_CACHE):
        full = store.read_array(FULL_CACHE, ContainerKind.LANDSCAPE)
        full_meta = store.read_json(FULL_META)
        if not np.array_equal(np.asarray(full_meta.get("betas")), betas):
            raise ValidationFailure("Cached full landscapes were computed on a different beta grid")
    elif len(ranks) > 1 or (args.rank is None and args.rank_c is None):
        logger.error("A rank sweep needs the full-run cache")
        raise ValidationFailure(f"Missing {FULL_CACHE} in {store.directory}; run align3d --full first")
    else:
        logger.warning(f"No {FULL_CACHE} in {store.directory}; skipping the comparison report")

    c_kernel, d_kernel = kernel_3d_radial(target), kernel_3d_degree(target)
    store.write_array("kernel_radial.rra", ContainerKind.KERNEL, c_kernel.entries)
    store.write_array("kernel_degree.rra", ContainerKind.KERNEL, d_kernel.entries)
    _write_spectra(store, [
        ("radial", principal_basis(c_kernel, c_kernel.dim).eigenvalues),
        ("degree", principal_basis(d_kernel, d_kernel.dim).eigenvalues),
    ])

    reports, speedups = [], []
    for H_C, H_D in ranks:
        timer = PhaseTimer()
        result = compressed_volume_landscapes(
            volumes, target, betas, H_C, H_D, opts.block_size, opts.workers, opts.progress,
            psd_tolerance=opts.psd_tolerance, timer=timer,
        )
        tag = f"c{H_C:03d}_d{H_D:03d}"
        store.write_array(f"landscapes_{tag}.rra", ContainerKind.LANDSCAPE, result.values)
        write_landscape_csv_3d(store.path(f"landscapes_{tag}.csv"), result.values, betas)
        store.write_array(f"basis_radial_{tag}.rra", ContainerKind.BASIS, result.radial_basis.vectors)
        store.write_array(f"basis_degree_{tag}.rra", ContainerKind.BASIS, result.degree_basis.vectors)
        if full is None:
            continue
        report = compare_landscapes(result.values, full, H_C, pair_axes=1, timing=timer.medians(), center=True, H_D=H_D)
        report_to_json(report, store.path(f"report_{tag}.json"))
        logger.info(
            f"H_C={H_C} H_D={H_D}: rel_frobenius={report.rel_frobenius:.3e} "
            f"correlation={report.correlation:.4f} mean f={report.backward_fraction_mean:.4f}"
        )
        if H_C == grid.R and H_D == grid.L + 1:
            _check_full_rank(report, opts.full_rank_tolerance, f"align3d H_C={H_C} H_D={H_D}")
        reports.append(report)
        speedups.append(speedup(_per_pair_total(full_meta["timing"]), _per_pair_total(report.timing)))
    if reports:
        curve_to_csv(reports, store.path(CURVE), [float("nan") if s is None else s for s in speedups])
    return reports


def _repeat(timer: PhaseTimer, warmup: int, repeats: int, fn) -> None:
    for rep in range(warmup + repeats):
        with timer.repeat(record=rep >= warmup):
            fn()


def _phase_summary(timer: PhaseTimer) -> Dict[str, Dict]:
    return {name: asdict(stats) for name, stats in timer.summary().items()}


def _speedups(full: PhaseTimer, compressed: PhaseTimer) -> Dict[str, Optional[float]]:
    full_medians, compressed_medians = full.medians(), compressed.medians()
    return {
        "per_pair": speedup(_per_pair_total(full_medians), _per_pair_total(compressed_medians)),
        "total": speedup(sum(full_medians.values()), sum(compressed_medians.values())),
    }


def _bench_2d(opts: RunOptions, args) -> Dict:
    m = opts.manifest
    polar = m.require_polar()
    grid = polar.build()
    Q_out = polar.output_length
    s = m.synth2d
    image_set = make_image_set(
        load_phantom(m.phantom), grid, s.n_images, s.n_targets, s.n_groups, s.ctf_lambdas,
        noise=_noise(m), snr=m.noise.snr, noise_domain=m.noise.domain, N=m.noise.N,
        sample_method=opts.sample_method,
    )
    groups = image_set.target_groups if m.group_key == "ctf" else np.zeros(s.n_targets, dtype=int)
    n_groups = int(np.unique(groups).size)
    H = args.rank if args.rank is not None else min(8, grid.R)
    sweep = sorted(set(m.h_sweep) | {H})
    warmup, repeats = m.bench.warmup, m.bench.repeats

    full_timer = PhaseTimer()
    _repeat(full_timer, warmup, repeats, lambda: landscape_2d_batch(
        image_set.images, image_set.targets, Q_out, opts.block_size, opts.workers, timer=full_timer,
    ))
    compressed = {}
    for h in sweep:
        timer = PhaseTimer()
        _repeat(timer, warmup, repeats, lambda: compressed_landscapes_by_group(
            image_set.images, image_set.targets, groups, h, Q_out, opts.block_size, opts.workers,
            psd_tolerance=opts.psd_tolerance, timer=timer,
        ))
        compressed[h] = timer
        logger.info(f"bench 2d H={h}: per-pair {_per_pair_total(timer.medians()):.4f}s")

    result = {
        "R": grid.R, "Q": grid.Q, "Q_out": Q_out, "N_A": s.n_images, "N_B": s.n_targets,
        "n_groups": n_groups, "H": H, "warmup": warmup, "repeats": repeats, "workers": opts.workers,
        "full": _phase_summary(full_timer),
        "compressed": {str(h): _phase_summary(timer) for h, timer in compressed.items()},
        "ledger": cost_ledger_2d(grid.R, grid.Q, Q_out, H, s.n_images, s.n_targets, n_groups),
        "speedup": _speedups(full_timer, compressed[H]),
    }
    if len(sweep) >= 2:
        result["step1_fit"] = linear_fit(sweep, [compressed[h].median("per_pair.step1") for h in sweep])
    return result


def _bench_3d(opts: RunOptions, args) -> Dict:
    m = opts.manifest
    grid = m.require_sphere().build()
    betas = m.beta_grid(parse_betas(args.betas))
    volume_set = make_volume_set(load_phantom(m.phantom), grid, m.synth3d.n_volumes, noise=_noise(m), snr=m.noise.snr)
    base = args.rank if args.rank is not None else 8
    H_C = args.rank_c if args.rank_c is not None else min(base, grid.R)
    H_D = args.rank_d if args.rank_d is not None else min(base, grid.L + 1)
    warmup, repeats = m.bench.warmup, m.bench.repeats

    def full_run():
        with timed(full_timer, "precompute.wigner"):
            tables = wigner_stack(betas, grid.L)
        landscape_3d_batch(
            volume_set.volumes, volume_set.target, betas, opts.block_size, opts.workers, tables=tables, timer=full_timer,
        )

    full_timer = PhaseTimer()
    _repeat(full_timer, warmup, repeats, full_run)
    compressed_timer = PhaseTimer()
    _repeat(compressed_timer, warmup, repeats, lambda: compressed_volume_landscapes(
        volume_set.volumes, volume_set.target, betas, H_C, H_D, opts.block_size, opts.workers,
        psd_tolerance=opts.psd_tolerance, timer=compressed_timer,
    ))
    return {
        "R": grid.R, "L": grid.L, "n_beta": int(betas.size), "N_A": m.synth3d.n_volumes,
        "H_C": H_C, "H_D": H_D, "warmup": warmup, "repeats": repeats, "workers": opts.workers,
        "full": _phase_summary(full_timer),
        "compressed": _phase_summary(compressed_timer),
        "ledger": cost_ledger_3d(grid.R, grid.L, H_C, H_D, int(betas.size), m.synth3d.n_volumes),
        "speedup": _speedups(full_timer, compressed_timer),
    }


def run_bench(opts: RunOptions, args) -> Dict:
    """
    Time full against compressed alignment on in-memory synthetic sets for every grid
    section present in the manifest; writes bench.json.

    Raises:
        ValidationFailure: If the manifest has neither a polar nor a sphere section.
    """
    m = opts.manifest
    if m.polar is None and m.sphere is None:
        raise ValidationFailure("Manifest needs a 'polar' or 'sphere' section to benchmark")
    timing = {}
    if m.polar is not None:
        timing["2d"] = _bench_2d(opts, args)
    if m.sphere is not None:
        timing["3d"] = _bench_3d(opts, args)
    store = RunStore(opts.out_dir, logger)
    store.write_json("bench.json", timing)
    for key, section in timing.items():
        logger.info(f"bench {key}: speedup per-pair={section['speedup']['per_pair']} total={section['speedup']['total']}")
    return timing


COMMAND_RUNNERS = {
    "synth2d": lambda opts, args: run_synth2d(opts),
    "synth3d": lambda opts, args: run_synth3d(opts),
    "align2d": run_align2d,
    "align3d": run_align3d,
    "bench": run_bench,
}
