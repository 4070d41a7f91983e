"""Command-line entry point wiring the whole pipeline.

Subcommands: gen-world, build-submaps, describe, retrieve, register, tuples,
losses, eval, bench, config.  Every subcommand is deterministic given its
--seed, writes only under its --out, and maps domain failures to exit code 1
with a single machine-parsable stderr line (usage errors exit 2).

Configuration is a single JSON document (see ``PipelineConfig``) with a
``version`` field; ``config dump`` prints the defaults.  Unknown keys are
rejected rather than ignored so typos cannot silently fall back to defaults.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from . import benchmarks
from .correspond import TupleConfig, build_tuples, write_tuples
from .depth_submap import (CameraIntrinsics, SubmapPolicy, accumulate,
                           read_dpth, read_ply, write_dpth, write_ply)
from .errors import ConfigError, DomainError, FormatError
from .evalharness import (RENDER_INTRINSICS, SyntheticWorldConfig,
                          benchmark_registration, evaluate_comprehensive,
                          evaluate_top1, generate_world,
                          overlap_pair_generator, sweep_success_vs_offset)
from .features import (OracleNoise, OracleProvider, match_features, read_feat,
                       write_feat)
from .geometry import (RigidTransform, format_tum_line, load_tum,
                       parse_tum_line, rre_degrees, rte_meters, save_tum)
from .losses import (LossConfig, descriptor_loss, point_to_point_loss,
                     prob_chamfer_loss, total_loss, triplet_loss)
from .occupancy import OccupancyParams
from .registration import (RegistrationConfig, RegistrationResult,
                           register_ransac, register_spectral)
from .retrieval import DescriptorIndex, load_index, query_topk

CONFIG_VERSION = 1

_SECTIONS = {
    "occupancy": OccupancyParams,
    "submap_policy": SubmapPolicy,
    "registration": RegistrationConfig,
    "tuples": TupleConfig,
    "losses": LossConfig,
    "world": SyntheticWorldConfig,
    "oracle_noise": OracleNoise,
}


@dataclasses.dataclass
class PipelineConfig:
    """One document holding every stage's knobs; sections may be omitted."""

    occupancy: OccupancyParams = dataclasses.field(default_factory=OccupancyParams)
    submap_policy: SubmapPolicy = dataclasses.field(default_factory=SubmapPolicy)
    registration: RegistrationConfig = dataclasses.field(default_factory=RegistrationConfig)
    tuples: TupleConfig = dataclasses.field(default_factory=TupleConfig)
    losses: LossConfig = dataclasses.field(default_factory=LossConfig)
    world: SyntheticWorldConfig = dataclasses.field(default_factory=SyntheticWorldConfig)
    oracle_noise: OracleNoise = dataclasses.field(default_factory=OracleNoise)

    def to_dict(self) -> dict:
        doc = {"version": CONFIG_VERSION}
        for name in _SECTIONS:
            doc[name] = dataclasses.asdict(getattr(self, name))
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "PipelineConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config document must be a JSON object")
        unknown = set(doc) - set(_SECTIONS) - {"version"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        version = doc.get("version", CONFIG_VERSION)
        if version != CONFIG_VERSION:
            raise ConfigError(f"unsupported config version {version!r}")
        kwargs = {}
        for name, section_cls in _SECTIONS.items():
            if name not in doc:
                continue
            section = doc[name]
            if not isinstance(section, dict):
                raise ConfigError(f"config section {name!r} must be an object")
            allowed = {f.name for f in dataclasses.fields(section_cls)}
            bad = set(section) - allowed
            if bad:
                raise ConfigError(
                    f"unknown keys in config section {name!r}: {sorted(bad)}")
            try:
                kwargs[name] = section_cls(**section)
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"invalid config section {name!r}: {exc}") from exc
        return cls(**kwargs)


def load_config(path) -> PipelineConfig:
    with open(path) as handle:
        try:
            doc = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return PipelineConfig.from_dict(doc)


def _config_from_args(args) -> PipelineConfig:
    if getattr(args, "config", None):
        return load_config(args.config)
    return PipelineConfig()


def _dump_json(path, payload) -> None:
    with open(path, "w") as handle:
        handle.write(json.dumps(payload, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Cloud directories: per-entry "{id}.ply" files plus a poses.tum sidecar
# whose timestamps are the integer entry ids.

def _write_cloud_dir(directory, entries) -> None:
    """entries: iterable of (id, points, pose)."""
    os.makedirs(directory, exist_ok=True)
    lines = []
    for entry_id, points, pose in entries:
        write_ply(os.path.join(directory, f"{int(entry_id)}.ply"), points)
        lines.append(format_tum_line(float(int(entry_id)), pose))
    with open(os.path.join(directory, "poses.tum"), "w") as handle:
        handle.write("\n".join(lines) + ("\n" if lines else ""))


def _read_cloud_dir(directory):
    """Yield (id, points, pose) in ascending id order."""
    poses_path = os.path.join(directory, "poses.tum")
    if not os.path.exists(poses_path):
        raise FormatError(f"no poses.tum in {directory}")
    trajectory = load_tum(poses_path)
    entries = []
    for timestamp, pose in trajectory:
        entry_id = int(timestamp)
        points = read_ply(os.path.join(directory, f"{entry_id}.ply"))
        entries.append((entry_id, points, pose))
    return entries


# ---------------------------------------------------------------------------
# Subcommands.

def _cmd_gen_world(args) -> int:
    cfg = _config_from_args(args)
    world_cfg = cfg.world
    if args.seed is not None:
        world_cfg = dataclasses.replace(world_cfg, seed=args.seed)
    world = generate_world(world_cfg)

    os.makedirs(args.out, exist_ok=True)
    _dump_json(os.path.join(args.out, "world.json"),
               {"version": CONFIG_VERSION, "world": dataclasses.asdict(world_cfg)})

    with open(os.path.join(args.out, "boxes.csv"), "w") as handle:
        handle.write("lo_x,lo_y,lo_z,hi_x,hi_y,hi_z\n")
        for lo, hi in zip(world.boxes_lo, world.boxes_hi):
            handle.write(",".join(repr(float(v)) for v in (*lo, *hi)) + "\n")

    save_tum(os.path.join(args.out, "trajectory.tum"), world.trajectory)

    frames_dir = os.path.join(args.out, "frames")
    os.makedirs(frames_dir, exist_ok=True)
    for i, frame in enumerate(world.depth_frames):
        write_dpth(os.path.join(frames_dir, f"{i:05d}.dpth"), frame)

    _write_cloud_dir(os.path.join(args.out, "scans"),
                     [(j, scan.points, scan.pose)
                      for j, scan in enumerate(world.scans)])
    return 0


def _cmd_build_submaps(args) -> int:
    cfg = _config_from_args(args)
    frames_dir = os.path.join(args.inp, "frames")
    if not os.path.isdir(frames_dir):
        raise FormatError(f"no frames/ directory under {args.inp}")
    names = sorted(n for n in os.listdir(frames_dir) if n.endswith(".dpth"))
    if not names:
        raise FormatError(f"no .dpth frames under {frames_dir}")
    frames = (read_dpth(os.path.join(frames_dir, name)) for name in names)

    submaps = list(accumulate(frames, RENDER_INTRINSICS,
                              policy=cfg.submap_policy, occ=cfg.occupancy))
    _write_cloud_dir(args.out, [(i, s.cloud, s.reference_pose)
                                for i, s in enumerate(submaps)])
    _dump_json(os.path.join(args.out, "manifest.json"),
               {"count": len(submaps),
                "source_frame_ids": [s.source_frame_ids for s in submaps]})
    return 0


def _noise_from_config(cfg: PipelineConfig) -> OracleNoise:
    return cfg.oracle_noise


def _cmd_describe(args) -> int:
    cfg = _config_from_args(args)
    entries = _read_cloud_dir(args.inp)
    provider = OracleProvider(seed=args.seed, noise=_noise_from_config(cfg),
                              max_keypoints=args.keypoints)
    os.makedirs(args.out, exist_ok=True)
    rows = []
    lines = []
    for entry_id, points, pose in entries:
        descriptor, keypoints = provider.describe(points, pose, salt=entry_id)
        write_feat(os.path.join(args.out, f"{entry_id}.feat"),
                   descriptor, keypoints)
        rows.append((entry_id, pose.translation))
        lines.append(format_tum_line(float(entry_id), pose))
    with open(os.path.join(args.out, "positions.csv"), "w") as handle:
        handle.write("id,x,y,z\n")
        for entry_id, t in rows:
            handle.write(",".join([str(entry_id)]
                                  + [repr(float(v)) for v in t]) + "\n")
    with open(os.path.join(args.out, "poses.tum"), "w") as handle:
        handle.write("\n".join(lines) + ("\n" if lines else ""))
    return 0


def _cmd_retrieve(args) -> int:
    index = load_index(args.index)
    queries = load_index(args.queries)
    ids, descriptors, _ = queries.arrays()
    order = np.argsort(ids)
    lines = []
    for i in order:
        top = query_topk(index, descriptors[i], args.k)
        lines.append(json.dumps(
            {"query": int(ids[i]),
             "topk": [[int(r[0]), float(r[1])] for r in top]},
            sort_keys=True))
    text = "\n".join(lines) + ("\n" if lines else "")
    if args.out:
        with open(args.out, "w") as handle:
            handle.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_register(args) -> int:
    _, query_kp = read_feat(args.query)
    _, cand_kp = read_feat(args.candidate)
    if args.method == "ransac":
        result: RegistrationResult = register_ransac(
            query_kp, cand_kp, iterations=args.iterations, seed=args.seed)
    else:
        result = register_spectral(query_kp, cand_kp, RegistrationConfig())
    payload = {
        "method": args.method,
        "rotation": [float(v) for v in result.transform.rotation.ravel()],
        "translation": [float(v) for v in result.transform.translation],
        "kept_count": int(result.kept_count),
        "converged": bool(result.converged),
        "elapsed_ms": result.elapsed * 1e3,
    }
    if args.gt:
        with open(args.gt) as handle:
            rows = [line for line in handle.read().splitlines() if line.strip()]
        if len(rows) != 2:
            raise FormatError("--gt file must hold exactly two pose lines "
                              "(query pose then candidate pose)")
        # positional, not temporal: parse the lines directly so the query may
        # carry a later timestamp than the candidate
        _, query_pose = parse_tum_line(rows[0])
        _, cand_pose = parse_tum_line(rows[1])
        gt = cand_pose.inverse().compose(query_pose)
        payload["rre_deg"] = rre_degrees(result.transform, gt)
        payload["rte_m"] = rte_meters(result.transform, gt)
    if args.out:
        _dump_json(args.out, payload)
    else:
        print(json.dumps(payload, indent=2, sort_keys=True))
    return 0


def _cmd_tuples(args) -> int:
    cfg = _config_from_args(args)
    poses_path = os.path.join(args.features, "poses.tum")
    if not os.path.exists(poses_path):
        raise FormatError(f"no poses.tum in {args.features}; run describe first")
    trajectory = load_tum(poses_path)
    entries = []
    for timestamp, pose in trajectory:
        entry_id = int(timestamp)
        _, keypoints = read_feat(os.path.join(args.features, f"{entry_id}.feat"))
        entries.append((entry_id, keypoints, pose))
    tuples = build_tuples(entries, cfg.tuples)
    write_tuples(args.out, tuples)
    return 0


def _cmd_losses(args) -> int:
    if args.action == "eval":
        return _losses_eval_pair(args)
    cfg = _config_from_args(args)
    rng = np.random.default_rng(args.seed)

    def unit(v):
        return v / np.linalg.norm(v)

    ga, gp, gn = (unit(rng.standard_normal(256)) for _ in range(3))
    triplet_value, _ = triplet_loss(ga, gp, gn, cfg.losses.margin)

    la = rng.standard_normal((6, 32))
    lp = rng.standard_normal((9, 32))
    nn_map = rng.integers(0, 9, 6)
    descriptor_value = descriptor_loss(
        la, lp, nn_map,
        negate_distances=cfg.losses.descriptor_loss_negate_distances)

    qa = rng.uniform(-5.0, 5.0, (12, 3))
    qp = qa[:10] + rng.normal(0.0, 0.1, (10, 3))
    sa = rng.uniform(0.5, 1.5, 12)
    sp = rng.uniform(0.5, 1.5, 10)
    chamfer_value = prob_chamfer_loss(qa, qp, sa, sp)

    cloud_a = rng.uniform(-5.0, 5.0, (200, 3))
    cloud_b = rng.uniform(-5.0, 5.0, (220, 3))
    p2p_value = point_to_point_loss(qa, cloud_a, qp, cloud_b)

    payload = {
        "seed": args.seed,
        "triplet": float(triplet_value),
        "descriptor": float(descriptor_value),
        "prob_chamfer": float(chamfer_value),
        "point_to_point": float(p2p_value),
        "total": total_loss([triplet_value, descriptor_value,
                             chamfer_value, p2p_value]),
    }
    if args.out:
        _dump_json(args.out, payload)
    else:
        print(json.dumps(payload, indent=2, sort_keys=True))
    return 0


def _losses_eval_pair(args) -> int:
    """Four loss terms for an anchor/positive FEAT pair.

    The negative descriptor comes from --negative when given, otherwise from
    a seeded random unit vector.  Point-to-point snaps keypoints to --cloud-a
    / --cloud-b when given, otherwise to their own keypoint coordinates
    (keypoints are cloud members, so that term is then zero).
    """
    if not args.query or not args.candidate:
        raise ConfigError("losses eval needs --query and --candidate FEAT files")
    cfg = _config_from_args(args)
    ga, kp_a = read_feat(args.query)
    gp, kp_p = read_feat(args.candidate)
    if args.negative:
        gn, _ = read_feat(args.negative)
    else:
        rng = np.random.default_rng(args.seed)
        gn = rng.standard_normal(256)
        gn = gn / np.linalg.norm(gn)
    triplet_value, _ = triplet_loss(ga, gp, gn, cfg.losses.margin)

    corr = match_features(kp_a, kp_p)
    descriptor_value = descriptor_loss(
        kp_a.features[corr.ia], kp_p.features, corr.ip,
        negate_distances=cfg.losses.descriptor_loss_negate_distances)

    chamfer_value = prob_chamfer_loss(kp_a.coords, kp_p.coords,
                                      kp_a.saliency, kp_p.saliency)

    cloud_a = read_ply(args.cloud_a) if args.cloud_a else kp_a.coords
    cloud_b = read_ply(args.cloud_b) if args.cloud_b else kp_p.coords
    p2p_value = point_to_point_loss(kp_a.coords, cloud_a,
                                    kp_p.coords, cloud_b)

    payload = {
        "triplet": float(triplet_value),
        "descriptor": float(descriptor_value),
        "prob_chamfer": float(chamfer_value),
        "point_to_point": float(p2p_value),
        "total": total_loss([triplet_value, descriptor_value,
                             chamfer_value, p2p_value]),
    }
    if args.out:
        _dump_json(args.out, payload)
    else:
        print(json.dumps(payload, indent=2, sort_keys=True))
    return 0


def _load_world_config(path, base: SyntheticWorldConfig) -> SyntheticWorldConfig:
    with open(path) as handle:
        try:
            raw = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("world config must be a JSON object")
    known = {f.name for f in dataclasses.fields(SyntheticWorldConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown keys in world config: {unknown}")
    try:
        return dataclasses.replace(base, **raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad world config value: {exc}") from exc


def _cmd_eval(args) -> int:
    cfg = _config_from_args(args)
    if args.world:
        entries = _read_cloud_dir(os.path.join(args.world, "scans"))
    else:
        world_cfg = cfg.world
        if args.world_config:
            world_cfg = _load_world_config(args.world_config, world_cfg)
        if args.seed is not None:
            world_cfg = dataclasses.replace(world_cfg, seed=args.seed)
        world = generate_world(world_cfg)
        entries = [(j, scan.points, scan.pose)
                   for j, scan in enumerate(world.scans)]
    if len(entries) < 2:
        raise FormatError("need at least two scans to split into "
                          "candidates and queries")
    half = len(entries) // 2
    candidates = entries[:half]
    queries = entries[half:]

    provider_seed = args.seed if args.seed is not None else 0
    provider = OracleProvider(seed=provider_seed, noise=_noise_from_config(cfg),
                              max_keypoints=args.keypoints)
    if args.protocol == "top1":
        report = evaluate_top1(queries, candidates, provider,
                               cfg.registration, method=args.method,
                               jobs=args.jobs)
    else:
        report = evaluate_comprehensive(queries, candidates, provider,
                                        cfg.registration, method=args.method,
                                        jobs=args.jobs)
    os.makedirs(args.out, exist_ok=True)
    _dump_json(os.path.join(args.out, "report.json"), report.to_dict())
    _dump_json(os.path.join(args.out, "timing.json"), report.timing)
    return 0


def _cmd_bench(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    if args.what == "registration":
        report = benchmark_registration(trials=args.trials, seed=args.seed)
        _dump_json(os.path.join(args.out, "bench_registration.json"), report)
    elif args.what == "sweep":
        cfg = _config_from_args(args)
        try:
            offsets = [float(v) for v in args.offsets.split(",") if v.strip()]
        except ValueError as exc:
            raise ConfigError(f"bad --offsets list: {args.offsets!r}") from exc
        if not offsets:
            raise ConfigError("--offsets must name at least one offset")
        rows = sweep_success_vs_offset(overlap_pair_generator(cfg.world),
                                       offsets, trials=args.trials)
        with open(os.path.join(args.out, "sweep.csv"), "w") as handle:
            handle.write("offset_m,spectral_success,ransac_success\n")
            for row in rows:
                handle.write(f"{row['offset']:g},{row['spectral']:g},"
                             f"{row['ransac']:g}\n")
    else:
        report = benchmarks.benchmark_kernels(seed=args.seed)
        _dump_json(os.path.join(args.out, "bench_kernels.json"), report)
    return 0


def _cmd_config(args) -> int:
    cfg = _config_from_args(args)
    if args.action != "dump":
        raise ConfigError(f"unknown config action {args.action!r}")
    if args.out:
        _dump_json(args.out, cfg.to_dict())
    else:
        print(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="submaploc",
        description="Submap construction, descriptor retrieval, and "
                    "spectral registration pipeline.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-world", help="generate a synthetic world directory")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.set_defaults(func=_cmd_gen_world)

    p = sub.add_parser("build-submaps",
                       help="fuse depth frames from a world directory into submaps")
    p.add_argument("--in", dest="inp", required=True,
                   help="world directory produced by gen-world")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.set_defaults(func=_cmd_build_submaps)

    p = sub.add_parser("describe",
                       help="extract descriptors + keypoints for a cloud directory")
    p.add_argument("--in", dest="inp", required=True,
                   help="directory holding {id}.ply files and poses.tum")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--keypoints", type=int, default=256)
    p.add_argument("--config")
    p.set_defaults(func=_cmd_describe)

    p = sub.add_parser("retrieve", help="top-k descriptor search")
    p.add_argument("--index", required=True,
                   help="directory of candidate FEAT files + positions.csv")
    p.add_argument("--queries", required=True,
                   help="directory of query FEAT files + positions.csv")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_retrieve)

    p = sub.add_parser("register", help="register two FEAT files")
    p.add_argument("--query", required=True)
    p.add_argument("--candidate", required=True)
    p.add_argument("--method", choices=("spectral", "ransac"),
                   default="spectral")
    p.add_argument("--iterations", type=int, default=10000,
                   help="RANSAC iterations (ignored for spectral)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--gt", help="TUM file with query pose then candidate pose")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_register)

    p = sub.add_parser("tuples",
                       help="build training tuples from a described directory")
    p.add_argument("--features", required=True,
                   help="directory produced by describe")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.set_defaults(func=_cmd_tuples)

    p = sub.add_parser("losses", help="evaluate the loss terms")
    p.add_argument("action", nargs="?", choices=("demo", "eval"),
                   default="demo",
                   help="demo: seeded synthetic example; eval: score a "
                        "query/candidate FEAT pair")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--query", help="anchor FEAT file (eval)")
    p.add_argument("--candidate", help="positive FEAT file (eval)")
    p.add_argument("--negative",
                   help="negative FEAT file (eval; seeded random if absent)")
    p.add_argument("--cloud-a", help="PLY cloud the anchor keypoints came from")
    p.add_argument("--cloud-b", help="PLY cloud the positive keypoints came from")
    p.add_argument("--out")
    p.add_argument("--config")
    p.set_defaults(func=_cmd_losses)

    p = sub.add_parser("eval", help="run an evaluation protocol")
    p.add_argument("--protocol", choices=("top1", "comprehensive"),
                   required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--world",
                   help="existing gen-world directory (otherwise generated)")
    p.add_argument("--world-config",
                   help="JSON file of synthetic-world fields (overrides the "
                        "config's world section)")
    p.add_argument("--method", choices=("spectral", "ransac"),
                   default="spectral")
    p.add_argument("--keypoints", type=int, default=256)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("bench", help="timing benchmarks and accuracy sweeps")
    p.add_argument("--what", choices=("registration", "kernels", "sweep"),
                   default="registration")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--offsets", default="0,10,20,30",
                   help="comma-separated query-candidate offsets in meters "
                        "(sweep only)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1,
                   help="accepted for symmetry; timing runs serially so "
                        "measurements stay honest")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("config", help="configuration utilities")
    p.add_argument("action", choices=("dump",))
    p.add_argument("--config")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_config)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DomainError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
